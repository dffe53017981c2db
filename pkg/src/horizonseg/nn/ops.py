""" Differentiable operators for the segmentation network. Layout is (batch, channels, height, width). """
import numpy as np

from .autograd import Tensor, as_tensor, record

# magnitudes below this are set to zero where they arise: subnormal float32 operands slow
# BLAS matrix products down about a hundredfold, and such values carry no information here
FLUSH_BELOW = 1e-30


def _flush(a):
    a[np.abs(a) < FLUSH_BELOW] = 0
    return a


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """ 2D cross-correlation plus bias on (batch, channels, h, w) input with (F, C, k, k) kernels.

    Output size is floor((n + 2 * padding - k) / stride) + 1; trailing input rows a strided
    kernel never reaches receive zero gradient.
    """
    x = transpose(as_tensor(x), (0, 2, 3, 1))
    out = conv2d_nhwc(x, transpose(as_tensor(weight), (2, 3, 1, 0)), bias, stride, padding)
    return transpose(out, (0, 3, 1, 2))


def conv2d_nhwc(x, weight, bias=None, stride=1, padding=0):
    """ Channels-last convolution: x is (B, H, W, C), weight is (k, k, C, F). """
    x, weight = as_tensor(x), as_tensor(weight)
    b, h, w, c = x.shape
    k, k2, cw, f = weight.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f'kernels must be square with odd size, got {k}x{k2}')
    if c != cw:
        raise ValueError(f'input has {c} channels but kernels expect {cw}')
    span_h, span_w = h + 2 * padding - k, w + 2 * padding - k
    if span_h < 0 or span_w < 0 or stride < 1:
        raise ValueError(f'a {k}x{k} stride-{stride} conv with padding {padding} does not fit a {h}x{w} input')
    ho, wo = span_h // stride + 1, span_w // stride + 1
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else x.data
    # few input channels make the per-tap products too skinny; im2col wins there
    if stride == 1 and c >= 8:
        out, grads = _conv_shifted(xp, weight.data)
    else:
        out, grads = _conv_im2col(xp, weight.data, stride, ho, wo)
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data

    def backward(g):
        gxp, gw = grads(g, x.requires_grad, weight.requires_grad)
        gb = g.sum(axis=(0, 1, 2)) if bias is not None and bias.requires_grad else None
        gx = None
        if gxp is not None:
            gx = gxp[:, padding:padding + h, padding:padding + w, :] if padding else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return record(out, parents, backward)


def _conv_shifted(xp, weight):
    """ Stride-1 convolution without an im2col buffer.

    With the padded batch flattened to (B * Hp * Wp, C), kernel tap (i, j) reads the contiguous
    row block starting at i * Wp + j, so each tap is one plain matrix product. Rows whose window
    would straddle an image border land in the discarded right/bottom margin of the padded grid.
    """
    b, hp, wp, c = xp.shape
    k, f = weight.shape[0], weight.shape[-1]
    ho, wo = hp - k + 1, wp - k + 1
    flat = xp.reshape(-1, c)
    rows = flat.shape[0] - (k - 1) * (wp + 1)
    taps = [(i, j, i * wp + j) for i in range(k) for j in range(k)]

    full = np.zeros((flat.shape[0], f), dtype=np.result_type(xp, weight))
    for i, j, off in taps:
        full[:rows] += flat[off:off + rows] @ weight[i, j]
    out = np.ascontiguousarray(full.reshape(b, hp, wp, f)[:, :ho, :wo, :])

    def grads(g, need_x, need_w):
        gfull = np.zeros((b, hp, wp, f), dtype=g.dtype)
        gfull[:, :ho, :wo, :] = g
        gflat = gfull.reshape(-1, f)[:rows]
        # row q of tap t's block holds the output gradient that input row q fed through tap t;
        # with all taps side by side both gradients are single matrix products
        shifted = np.zeros((flat.shape[0], len(taps), f), dtype=g.dtype)
        for t, (_, _, off) in enumerate(taps):
            shifted[off:off + rows, t] = gflat
        shifted = shifted.reshape(flat.shape[0], -1)
        gw = gxp = None
        if need_w:
            gw = (flat.T @ shifted).reshape(c, k, k, f).transpose(1, 2, 0, 3)
        if need_x:
            stacked = weight.reshape(k * k, c, f).transpose(0, 2, 1).reshape(k * k * f, c)
            gxp = (shifted @ stacked).reshape(xp.shape)
        return gxp, gw
    return out, grads


def _conv_im2col(xp, weight, stride, ho, wo):
    b, _, _, c = xp.shape
    k, f = weight.shape[0], weight.shape[-1]
    cols = np.empty((b, ho, wo, k, k, c), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :]
    cols = cols.reshape(b * ho * wo, k * k * c)
    wmat = weight.reshape(k * k * c, f)
    out = (cols @ wmat).reshape(b, ho, wo, f)

    def grads(g, need_x, need_w):
        gm = g.reshape(-1, f)
        gw = (cols.T @ gm).reshape(weight.shape) if need_w else None
        gxp = None
        if need_x:
            gcols = (gm @ wmat.T).reshape(b, ho, wo, k, k, c)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += gcols[:, :, :, i, j, :]
        return gxp, gw
    return out, grads


def transpose(x, axes):
    x = as_tensor(x)
    inverse = np.argsort(axes)

    def backward(g):
        return (g.transpose(inverse),)
    return record(np.ascontiguousarray(x.data.transpose(axes)), (x,), backward)


def upsample2x(x):
    """ Nearest-neighbour doubling of both spatial axes of (B, C, H, W) input. """
    x = as_tensor(x)
    b, c, h, w = x.shape
    out = np.broadcast_to(x.data[:, :, :, None, :, None], (b, c, h, 2, w, 2)).reshape(b, c, 2 * h, 2 * w)

    def backward(g):
        return (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)),)
    return record(out, (x,), backward)


def upsample2x_nhwc(x):
    """ Channels-last variant of :func:`upsample2x`. """
    x = as_tensor(x)
    b, h, w, c = x.shape
    out = np.broadcast_to(x.data[:, :, None, :, None, :], (b, h, 2, w, 2, c)).reshape(b, 2 * h, 2 * w, c)

    def backward(g):
        return (g.reshape(b, h, 2, w, 2, c).sum(axis=(2, 4)),)
    return record(out, (x,), backward)


def relu(x):
    x = as_tensor(x)
    out = np.maximum(x.data, 0)

    def backward(g):
        return (g * (x.data > 0),)
    return record(out, (x,), backward)


def sigmoid(x):
    x = as_tensor(x)
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    out = _flush(np.where(d >= 0, 1 / (1 + e), e / (1 + e)).astype(d.dtype))

    def backward(g):
        return (_flush(g * out * (1 - out)),)
    return record(out, (x,), backward)


def activation(x, kind):
    if kind == 'relu':
        return relu(x)
    if kind == 'sigmoid':
        return sigmoid(x)
    raise ValueError(f'unknown activation {kind!r}')


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        index = [slice(None)] * g.ndim
        grads = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            index[axis] = slice(lo, hi)
            grads.append(g[tuple(index)])
        return tuple(grads)
    return record(out, tuple(tensors), backward)


def dice_loss(pred, target, smooth=1.0):
    """ 1 - (2 * sum(pred * target) + smooth) / (sum(pred) + sum(target) + smooth), over the whole tensor. """
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    if smooth < 0:
        raise ValueError(f'smooth must be nonnegative, got {smooth}')
    if pred.shape != target.shape:
        raise ValueError(f'prediction shape {pred.shape} and target shape {target.shape} differ')
    p = pred.data.astype(np.float64)
    t = target.astype(np.float64)
    intersection = float((p * t).sum())
    denominator = float(p.sum() + t.sum()) + smooth
    numerator = 2.0 * intersection + smooth
    loss = 1.0 - numerator / denominator

    def backward(g):
        grad = -(2.0 * t * denominator - numerator) / denominator ** 2
        return ((g * grad).astype(pred.dtype),)
    return record(np.asarray(loss, dtype=pred.dtype), (pred,), backward)
