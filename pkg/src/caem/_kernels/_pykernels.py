"""Pure numpy implementations of the convolution and pooling kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and the same per-element accumulation order, so both backends give
bit-identical results.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp, kh, kw, sh, sw):
    """Unfold a padded (B, C, Hp, Wp) batch into (B, C*kh*kw, Ho*Wo) columns.

    Row index of the result is ``(c*kh + i)*kw + j``, matching a kernel
    tensor of shape (O, C, kh, kw) reshaped to (O, C*kh*kw).
    """
    b, c, hp, wp = xp.shape
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    win = win[:, :, :ho, :wo]
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(b, c * kh * kw, ho * wo)


def col2im(cols, c, hp, wp, kh, kw, sh, sw):
    """Adjoint of :func:`im2col`: scatter-add columns back onto a (B, C, Hp, Wp) grid."""
    b = cols.shape[0]
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    cols = cols.reshape(b, c, kh, kw, ho, wo)
    out = np.zeros((b, c, hp, wp))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += cols[:, :, i, j]
    return out


def maxpool_forward(x, ph, pw):
    """Non-overlapping max pooling with floor extents.

    Returns the pooled map and, per output cell, the flat index of the first
    maximal element of its window in row-major order.
    """
    b, c, h, w = x.shape
    ho, wo = h // ph, w // pw
    win = x[:, :, :ho * ph, :wo * pw].reshape(b, c, ho, ph, wo, pw)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, ph * pw)
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(g, arg, h, w, ph, pw):
    """Route each pooled gradient to its recorded argmax position."""
    b, c, ho, wo = g.shape
    win = np.zeros((b, c, ho, wo, ph * pw))
    np.put_along_axis(win, arg[..., None], g[..., None], axis=-1)
    win = win.reshape(b, c, ho, wo, ph, pw).transpose(0, 1, 2, 4, 3, 5)
    out = np.zeros((b, c, h, w))
    out[:, :, :ho * ph, :wo * pw] = win.reshape(b, c, ho * ph, wo * pw)
    return out
