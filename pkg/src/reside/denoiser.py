"""Five-layer residual CNN denoiser with hand-written backprop and Adam.

Activations are NHWC arrays ``(batch, height, width, channels)``; complex
images map to two channels (real, imaginary). Kernels are stored as
``(3, 3, in_channels, out_channels)``. All convolutions are 3x3 with zero
padding, so the network is fully convolutional and preserves spatial size.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import ThreadpoolController

from .errors import FormatError
from .formats import NET_MAGIC, VERSION

CHANNELS = (2, 64, 64, 64, 64, 2)
KERNEL = 3
# output-layer init gain used for training; 1.0 is plain Kaiming
OUT_GAIN = 0.01

_blas = ThreadpoolController()


@dataclass
class DenoiserNet:
    """Parameters ``[w1, b1, ..., w5, b5]`` plus an optional training log."""

    params: list
    initial_loss: float = float("nan")
    epoch_losses: list = field(default_factory=list)

    @property
    def dtype(self):
        return self.params[0].dtype

    @property
    def n_params(self):
        return sum(p.size for p in self.params)

    @property
    def final_loss(self):
        return self.epoch_losses[-1] if self.epoch_losses else self.initial_loss

    def astype(self, dtype):
        return DenoiserNet([p.astype(dtype) for p in self.params], self.initial_loss,
                           list(self.epoch_losses))

    def copy(self):
        return self.astype(self.dtype)


def param_shapes():
    shapes = []
    for cin, cout in zip(CHANNELS[:-1], CHANNELS[1:]):
        shapes += [(KERNEL, KERNEL, cin, cout), (cout,)]
    return shapes


def zero_net(dtype=np.float32):
    return DenoiserNet([np.zeros(s, dtype=dtype) for s in param_shapes()])


def init_net(rng, dtype=np.float32, out_gain=1.0):
    """Kaiming-uniform fan-in initialisation with zero biases.

    Layers feeding a ReLU use gain sqrt(2); the linear output layer uses gain
    ``out_gain``. A small ``out_gain`` starts the network close to the
    identity map, which is what the skip connection is for.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    params = []
    n_layers = len(CHANNELS) - 1
    for k, (cin, cout) in enumerate(zip(CHANNELS[:-1], CHANNELS[1:])):
        fan_in = KERNEL * KERNEL * cin
        gain2 = 2.0 if k < n_layers - 1 else out_gain**2
        bound = np.sqrt(3.0 * gain2 / fan_in)
        w = rng.uniform(-bound, bound, size=(KERNEL, KERNEL, cin, cout))
        params += [w.astype(dtype), np.zeros(cout, dtype=dtype)]
    return DenoiserNet(params)


# -- convolution primitives ------------------------------------------------
#
# A zero-padded NHWC batch is flattened to ``(n*(h+2)*(w+2), c)``. Shifting the
# 3x3 window by (i, j) is then an offset of ``i*(w+2) + j`` rows, so every tap
# is one contiguous GEMM. Rows that straddle the padding are computed and
# discarded.


def _flat_padded(x):
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, :] = x
    return xp.reshape(-1, c)


def _offsets(w):
    return [i * (w + 2) + j for i in range(KERNEL) for j in range(KERNEL)]


def conv3x3(x, w, b):
    """Same-size 3x3 convolution (cross-correlation) of an NHWC batch."""
    n, h, wd, _ = x.shape
    cout = w.shape[3]
    flat = _flat_padded(x)
    offs = _offsets(wd)
    span = flat.shape[0] - offs[-1]
    out = np.empty((flat.shape[0], cout), dtype=np.result_type(x, w))
    acc = out[:span]
    np.matmul(flat[:span], w[0, 0], out=acc)
    for k, off in enumerate(offs[1:], start=1):
        acc += flat[off : off + span] @ w[k // KERNEL, k % KERNEL]
    y = out.reshape(n, h + 2, wd + 2, cout)[:, :h, :wd, :]
    return y + b


def conv3x3_backward(x, w, dout, need_dx=True):
    """Gradients of :func:`conv3x3` w.r.t. weights, bias and (optionally) input."""
    n, h, wd, cin = x.shape
    cout = w.shape[3]
    flat = _flat_padded(x)
    offs = _offsets(wd)
    span = flat.shape[0] - offs[-1]
    dpad = np.zeros((n, h + 2, wd + 2, cout), dtype=dout.dtype)
    dpad[:, :h, :wd, :] = dout
    dflat = dpad.reshape(-1, cout)[:span]
    dw = np.empty_like(w)
    # threaded BLAS splits this long reduction by thread count; pin it so
    # results do not depend on the thread setting
    with _blas.limit(limits=1, user_api="blas"):
        for k, off in enumerate(offs):
            dw[k // KERNEL, k % KERNEL] = flat[off : off + span].T @ dflat
    db = dout.sum(axis=(0, 1, 2))
    if not need_dx:
        return dw, db, None
    dx = np.zeros_like(flat)
    for k, off in enumerate(offs):
        dx[off : off + span] += dflat @ w[k // KERNEL, k % KERNEL].T
    return dw, db, dx.reshape(n, h + 2, wd + 2, cin)[:, 1:-1, 1:-1, :]


# -- network ---------------------------------------------------------------


def _as_batch(patch):
    patch = np.asarray(patch)
    squeeze = patch.ndim == 3
    if squeeze:
        patch = patch[np.newaxis]
    if patch.ndim != 4 or patch.shape[-1] != 2:
        raise ValueError(f"expected (H, W, 2) or (N, H, W, 2) input, got {patch.shape}")
    return patch, squeeze


def _forward(params, x):
    acts = [x]
    h = x
    n_layers = len(params) // 2
    for k in range(n_layers):
        h = conv3x3(h, params[2 * k], params[2 * k + 1])
        if k < n_layers - 1:
            h = np.maximum(h, 0)
        acts.append(h)
    return x + h, acts


def net_forward(net, patch):
    """``f(x) = x + residual(x)`` for a two-channel patch or a batch of them."""
    x, squeeze = _as_batch(patch)
    x = x.astype(net.dtype, copy=False)
    out, _ = _forward(net.params, x)
    return out[0] if squeeze else out


def net_gradient(net, noisy, clean):
    """Squared-error loss and its exact gradient for every parameter.

    The loss is summed over pixels and channels and averaged over the batch.
    Returns ``(grads, loss)`` with ``grads`` aligned to ``net.params``.
    """
    x, _ = _as_batch(noisy)
    c, _ = _as_batch(clean)
    if x.shape != c.shape:
        raise ValueError(f"noisy {x.shape} and clean {c.shape} shapes differ")
    x = x.astype(net.dtype, copy=False)
    c = c.astype(net.dtype, copy=False)
    params = net.params
    out, acts = _forward(params, x)
    diff = out - c
    batch = x.shape[0]
    loss = float(np.sum(diff.astype(np.float64) ** 2) / batch)

    grads = [None] * len(params)
    dh = diff * (2.0 / batch)
    n_layers = len(params) // 2
    for k in range(n_layers - 1, -1, -1):
        if k < n_layers - 1:
            dh = dh * (acts[k + 1] > 0)
        dw, db, dh = conv3x3_backward(acts[k], params[2 * k], dh, need_dx=k > 0)
        grads[2 * k], grads[2 * k + 1] = dw, db
    return grads, loss


def batch_loss(net, noisy, clean):
    x, _ = _as_batch(noisy)
    c, _ = _as_batch(clean)
    out = net_forward(net, x)
    return float(np.sum((out - c.astype(out.dtype)).astype(np.float64) ** 2) / x.shape[0])


# -- optimiser -------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=1e-3):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0, lr)


def adam_step(params, grads, state):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimiser state differ in length")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        new_params.append((p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype))
        new_m.append(m.astype(p.dtype))
        new_v.append(v.astype(p.dtype))
    return new_params, AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)


# -- complex <-> two-channel ------------------------------------------------


def to_channels(img, dtype=np.float32):
    img = np.asarray(img)
    return np.stack([img.real, img.imag], axis=-1).astype(dtype)


def from_channels(arr):
    return arr[..., 0].astype(np.float64) + 1j * arr[..., 1].astype(np.float64)


def denoise_image(net, u):
    """Apply the network to a whole complex image at once."""
    u = np.asarray(u)
    if u.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {u.shape}")
    out = net_forward(net, to_channels(u, net.dtype)[np.newaxis])
    return from_channels(out[0])


def net_denoiser(net):
    return lambda u: denoise_image(net, u)


# -- checkpoints -------------------------------------------------------------


def net_to_bytes(net):
    """``RSDN`` checkpoint: magic, u16 version, then per tensor u32 ndim,
    u32 dims, little-endian float32 values, in parameter order."""
    out = [struct.pack("<4sH", NET_MAGIC, VERSION)]
    for p in net.params:
        out.append(struct.pack(f"<I{p.ndim}I", p.ndim, *p.shape))
        out.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return b"".join(out)


def net_from_bytes(raw):
    raw = bytes(raw)
    if len(raw) < 6:
        raise FormatError(f"truncated checkpoint header: expected 6 bytes, got {len(raw)}", len(raw))
    magic, version = struct.unpack_from("<4sH", raw, 0)
    if magic != NET_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {NET_MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    pos = 6
    params = []
    for shape in param_shapes():
        if len(raw) < pos + 4:
            raise FormatError("truncated checkpoint", pos)
        (ndim,) = struct.unpack_from("<I", raw, pos)
        if ndim != len(shape) or len(raw) < pos + 4 + 4 * ndim:
            raise FormatError(f"unexpected tensor rank {ndim}", pos)
        dims = struct.unpack_from(f"<{ndim}I", raw, pos + 4)
        if tuple(dims) != shape:
            raise FormatError(f"tensor shape {dims} does not match {shape}", pos + 4)
        pos += 4 + 4 * ndim
        nbytes = 4 * int(np.prod(shape))
        if len(raw) < pos + nbytes:
            raise FormatError(
                f"truncated checkpoint: expected {pos + nbytes} bytes, got {len(raw)}", len(raw)
            )
        params.append(np.frombuffer(raw, dtype="<f4", count=nbytes // 4, offset=pos)
                      .reshape(shape).astype(np.float32))
        pos += nbytes
    if pos != len(raw):
        raise FormatError(f"trailing garbage in checkpoint: expected {pos} bytes, got {len(raw)}", pos)
    if not all(np.all(np.isfinite(p)) for p in params):
        raise FormatError("checkpoint holds non-finite parameters")
    return DenoiserNet(params)


# -- training --------------------------------------------------------------


@dataclass(frozen=True)
class TrainSpec:
    epochs: int = 100
    minibatch: int = 16
    lr: float = 1e-3
    init_seed: int = 0
    dtype: str = "float32"
    out_gain: float = OUT_GAIN

    def __post_init__(self):
        if self.epochs < 1 or self.minibatch < 1:
            raise ValueError("epochs and minibatch must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")


def complex_noise(shape, sigma, rng):
    """Complex white Gaussian noise with per-component standard deviation ``sigma``."""
    return sigma * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def fit(net, noisy, clean, spec):
    """Minimise the mean squared error of ``net`` on aligned patch stacks.

    The minibatch order is reshuffled every epoch from ``spec.init_seed``'s
    shuffle stream; the last partial batch is kept.
    """
    dtype = np.dtype(spec.dtype)
    net = net.astype(dtype)
    noisy = noisy.astype(dtype, copy=False)
    clean = clean.astype(dtype, copy=False)
    shuffle = np.random.default_rng(np.random.SeedSequence([spec.init_seed, 1]))
    state = AdamState.for_params(net.params, spec.lr)
    n = noisy.shape[0]
    net.initial_loss = batch_loss(net, noisy, clean)
    net.epoch_losses = []
    for _ in range(spec.epochs):
        order = shuffle.permutation(n)
        total = 0.0
        for start in range(0, n, spec.minibatch):
            idx = order[start : start + spec.minibatch]
            grads, loss = net_gradient(net, noisy[idx], clean[idx])
            net.params, state = adam_step(net.params, grads, state)
            total += loss * len(idx)
        net.epoch_losses.append(total / n)
    return net


def train_denoiser(x_prev, sigma, patches, spec, rng_seed, init=None):
    """Train a fresh denoiser to map ``x_prev + noise(sigma)`` patches back to ``x_prev``.

    ``rng_seed`` drives the noise draw, ``patches.rng_seed`` the patch
    locations and ``spec.init_seed`` the initialisation and batch order.
    ``init`` warm-starts from an existing net instead of a random one.
    """
    from .patches import extract_patch_pairs

    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    x_prev = np.asarray(x_prev)
    noise_rng = np.random.default_rng(rng_seed)
    x_noisy = x_prev + complex_noise(x_prev.shape, sigma, noise_rng)
    noisy, clean = extract_patch_pairs(x_prev, x_noisy, patches)
    if init is None:
        init = init_net(np.random.default_rng(np.random.SeedSequence([spec.init_seed, 0])),
                        np.dtype(spec.dtype), spec.out_gain)
    return fit(init.copy(), noisy, clean, spec)
