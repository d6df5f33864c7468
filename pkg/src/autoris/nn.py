"""Two-pipeline feed-forward Q network with hand-written backpropagation.

Pipeline 1 consumes the observation state, pipeline 2 the phase state; their
outputs are concatenated and passed through a dense head that emits one Q
value per action. Supported layer kinds are ``dense``, ``batch_norm``,
``leaky_relu``, ``dropout`` and ``concat`` (head marker only).

Parameters are stored as float64 arrays in ``Network.params`` (trainable) and
``Network.buffers`` (batch-norm running statistics), keyed
``"<section>.<layer index>.<name>"`` in declaration order.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

SECTIONS = ("p1", "p2", "head")


class StaleCacheError(RuntimeError):
    """Backward was called with a cache produced before the last parameter update."""


class ParamFileError(ValueError):
    """A parameter file is corrupt, of the wrong version, or of another architecture."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    width: int = 0
    hyper: float = 0.0  # leaky slope, dropout rate or batch-norm epsilon

    def __post_init__(self):
        if self.kind not in ("dense", "batch_norm", "leaky_relu", "dropout", "concat"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dense" and self.width <= 0:
            raise ValueError("dense width must be positive")
        if self.kind == "dropout" and not 0.0 <= self.hyper < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        if self.kind == "leaky_relu" and self.hyper <= 0:
            raise ValueError("leaky slope must be positive")


@dataclass(frozen=True)
class Architecture:
    in1: int
    in2: int
    p1: tuple[LayerSpec, ...]
    p2: tuple[LayerSpec, ...]
    head: tuple[LayerSpec, ...]
    bn_momentum: float = 0.1

    @property
    def n_out(self) -> int:
        return [s for s in self.head if s.kind == "dense"][-1].width

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> Architecture:
        secs = {k: tuple(LayerSpec(**s) for s in d[k]) for k in SECTIONS}
        return cls(in1=d["in1"], in2=d["in2"], bn_momentum=d["bn_momentum"], **secs)


def default_architecture(in1: int, in2: int, n_actions: int, width1: int = 128,
                         width2: int = 64, head_width: int = 128, slope: float = 0.01,
                         dropout: float = 0.2, bn_eps: float = 1e-5) -> Architecture:
    def pipeline(width):
        return (
            LayerSpec("dense", width),
            LayerSpec("batch_norm", width, bn_eps),
            LayerSpec("leaky_relu", width, slope),
            LayerSpec("dropout", width, dropout),
        )

    return Architecture(
        in1=in1,
        in2=in2,
        p1=pipeline(width1),
        p2=pipeline(width2),
        head=(
            LayerSpec("concat", width1 + width2),
            LayerSpec("dense", head_width),
            LayerSpec("leaky_relu", head_width, slope),
            LayerSpec("dense", n_actions),
        ),
    )


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                bad = int(np.sum(~np.isfinite(g)))
                raise FloatingPointError(f"non-finite gradient for {name} ({bad} entries)")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(params[name]))
            v = self.v.setdefault(name, np.zeros_like(params[name]))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Network:
    """``q = f(s1, s2)``; see the module docstring for the layout."""

    instances_created = 0

    def __init__(self, arch: Architecture, rng: np.random.Generator | None = None,
                 optimizer: Adam | None = None):
        Network.instances_created += 1
        self.arch = arch
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.optimizer = optimizer if optimizer is not None else Adam()
        self.version = 0
        rng = rng if rng is not None else np.random.default_rng(0)
        widths = {"p1": arch.in1, "p2": arch.in2}
        for sec in SECTIONS:
            width = widths.get(sec, 0)
            for i, spec in enumerate(getattr(arch, sec)):
                key = f"{sec}.{i}"
                if spec.kind == "concat":
                    width = widths["p1_out"] + widths["p2_out"]
                    if spec.width and spec.width != width:
                        raise ValueError(f"concat width {spec.width} != {width}")
                elif spec.kind == "dense":
                    limit = np.sqrt(6.0 / width)
                    self.params[f"{key}.W"] = rng.uniform(-limit, limit, (width, spec.width))
                    self.params[f"{key}.b"] = np.zeros(spec.width)
                    width = spec.width
                elif spec.kind == "batch_norm":
                    self.params[f"{key}.gamma"] = np.ones(width)
                    self.params[f"{key}.beta"] = np.zeros(width)
                    self.buffers[f"{key}.mean"] = np.zeros(width)
                    self.buffers[f"{key}.var"] = np.ones(width)
            widths[f"{sec}_out"] = width

    def init_output(self, bias: float) -> None:
        """Zero the last dense layer's weights and set its bias to ``bias``,
        so every output starts at the same value."""
        last = [k for k in self.params if k.startswith("head.") and k.endswith(".W")][-1]
        self.params[last][:] = 0.0
        self.params[last[:-1] + "b"][:] = bias

    # forward -----------------------------------------------------------------

    def forward(self, s1, s2, mode: str = "eval", rng=None, masks=None,
                update_stats: bool = True):
        """Q values for a batch (or a single state pair).

        In ``train`` mode returns ``(q, cache)``; dropout masks are drawn from
        ``rng`` unless supplied through ``masks`` (keyed like the cache), and
        batch statistics are used by batch-norm layers for batches larger
        than one. ``eval`` mode returns only ``q`` and is deterministic.
        """
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        s1 = np.asarray(s1, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        single = s1.ndim == 1
        s1 = np.atleast_2d(s1)
        s2 = np.atleast_2d(s2)
        if s1.shape[1] != self.arch.in1 or s2.shape[1] != self.arch.in2:
            raise ValueError(
                f"expected inputs of width ({self.arch.in1}, {self.arch.in2}), "
                f"got ({s1.shape[1]}, {s2.shape[1]})"
            )
        if s1.shape[0] != s2.shape[0]:
            raise ValueError("input batches differ in size")
        train = mode == "train"
        cache = {"version": self.version, "masks": {}} if train else None
        if train and masks is None and rng is None:
            raise ValueError("train mode needs an rng or frozen dropout masks")
        ctx = (train, cache, masks, rng, update_stats)
        x1 = self._section("p1", s1, ctx)
        x2 = self._section("p2", s2, ctx)
        if cache is not None:
            cache["split"] = x1.shape[1]
        q = self._section("head", np.concatenate([x1, x2], axis=1), ctx)
        if single:
            q = q[0]
        return (q, cache) if train else q

    def _section(self, sec, x, ctx):
        train, cache, masks, rng, update_stats = ctx
        for i, spec in enumerate(getattr(self.arch, sec)):
            key = f"{sec}.{i}"
            kind = spec.kind
            if kind == "dense":
                if train:
                    cache[key] = x
                x = x @ self.params[f"{key}.W"] + self.params[f"{key}.b"]
            elif kind == "batch_norm":
                eps = spec.hyper
                use_batch = train and x.shape[0] > 1
                if use_batch:
                    mu = x.mean(axis=0)
                    var = x.var(axis=0)
                    if update_stats:
                        mom = self.arch.bn_momentum
                        self.buffers[f"{key}.mean"] = (1 - mom) * self.buffers[f"{key}.mean"] + mom * mu
                        self.buffers[f"{key}.var"] = (1 - mom) * self.buffers[f"{key}.var"] + mom * var
                else:
                    mu = self.buffers[f"{key}.mean"]
                    var = self.buffers[f"{key}.var"]
                inv_std = 1.0 / np.sqrt(var + eps)
                xhat = (x - mu) * inv_std
                if train:
                    cache[key] = (xhat, inv_std, use_batch)
                x = self.params[f"{key}.gamma"] * xhat + self.params[f"{key}.beta"]
            elif kind == "leaky_relu":
                if train:
                    cache[key] = x > 0
                x = np.where(x > 0, x, spec.hyper * x)
            elif kind == "dropout":
                if train and spec.hyper > 0:
                    if masks is not None:
                        mask = masks[key]
                    else:
                        mask = (rng.random(x.shape) >= spec.hyper) / (1.0 - spec.hyper)
                    cache["masks"][key] = mask
                    x = x * mask
        return x

    # backward ----------------------------------------------------------------

    def backward(self, cache, dq) -> dict[str, np.ndarray]:
        """Gradients of ``sum(dq * q)`` w.r.t. every trainable parameter."""
        if cache is None:
            raise StaleCacheError("backward needs the cache of a train-mode forward")
        if cache["version"] != self.version:
            raise StaleCacheError(
                f"cache from parameter version {cache['version']}, network is at {self.version}"
            )
        dq = np.atleast_2d(np.asarray(dq, dtype=float))
        grads: dict[str, np.ndarray] = {}
        dx = self._section_back("head", dq, cache, grads)
        split = cache["split"]
        self._section_back("p1", dx[:, :split], cache, grads)
        self._section_back("p2", dx[:, split:], cache, grads)
        return {name: grads[name] for name in self.params}

    def _section_back(self, sec, dx, cache, grads):
        specs = getattr(self.arch, sec)
        for i in range(len(specs) - 1, -1, -1):
            spec = specs[i]
            key = f"{sec}.{i}"
            kind = spec.kind
            if kind == "dense":
                x = cache[key]
                grads[f"{key}.W"] = x.T @ dx
                grads[f"{key}.b"] = dx.sum(axis=0)
                dx = dx @ self.params[f"{key}.W"].T
            elif kind == "batch_norm":
                xhat, inv_std, use_batch = cache[key]
                grads[f"{key}.gamma"] = np.sum(dx * xhat, axis=0)
                grads[f"{key}.beta"] = dx.sum(axis=0)
                dxhat = dx * self.params[f"{key}.gamma"]
                if use_batch:
                    n = dx.shape[0]
                    dx = (inv_std / n) * (
                        n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
                    )
                else:
                    dx = dxhat * inv_std
            elif kind == "leaky_relu":
                dx = np.where(cache[key], dx, spec.hyper * dx)
            elif kind == "dropout":
                mask = cache["masks"].get(key)
                if mask is not None:
                    dx = dx * mask
        return dx

    def optimizer_step(self, grads: dict) -> None:
        self.optimizer.step(self.params, grads)
        self.version += 1

    def copy(self) -> Network:
        """Independent snapshot (parameters, statistics and optimizer state)."""
        clone = Network.__new__(Network)
        clone.arch = self.arch
        clone.params = {k: v.copy() for k, v in self.params.items()}
        clone.buffers = {k: v.copy() for k, v in self.buffers.items()}
        opt = self.optimizer
        clone.optimizer = Adam(opt.lr, opt.beta1, opt.beta2, opt.eps, opt.t,
                               {k: v.copy() for k, v in opt.m.items()},
                               {k: v.copy() for k, v in opt.v.items()})
        clone.version = self.version
        return clone


def optimizer_step(net: Network, grads: dict) -> Network:
    net.optimizer_step(grads)
    return net


# gradient check ----------------------------------------------------------------

def gradient_check(net: Network | None = None, batch: int = 4, step: float = 1e-5,
                   seed: int = 0, floor: float = 1e-5, params=None):
    """Central finite differences against :meth:`Network.backward`.

    The scalar checked is ``sum(G * q)`` for a fixed random ``G``, with
    dropout masks frozen and batch-norm in batch-statistics mode. Relative
    error per entry is ``|a - n| / max(|a|, |n|, floor)``.

    Returns ``(max_relative_error, {param_name: max_relative_error})``.
    """
    rng = np.random.default_rng(seed)
    if net is None:
        net = Network(default_architecture(64, 32, 32), rng=rng)
    arch = net.arch
    s1 = rng.standard_normal((batch, arch.in1))
    s2 = rng.standard_normal((batch, arch.in2))
    G = rng.standard_normal((batch, arch.n_out))
    _, cache = net.forward(s1, s2, "train", rng=rng, update_stats=False)
    masks = cache["masks"]
    grads = net.backward(cache, G)

    def q_out():
        return net.forward(s1, s2, "train", masks=masks, update_stats=False)[0]

    report = {}
    names = params if params is not None else list(net.params)
    for name in names:
        p = net.params[name]
        flat = p.reshape(-1)
        num = np.empty_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = q_out()
            flat[j] = orig - step
            down = q_out()
            flat[j] = orig
            # contract after differencing: keeps roundoff at the level of q
            num[j] = np.sum(G * (up - down)) / (2 * step)
        ana = grads[name].reshape(-1)
        rel = np.abs(ana - num) / np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
        report[name] = float(rel.max())
    return max(report.values()), report


# persistence -----------------------------------------------------------------

MAGIC = b"ARISNET\x00"
FORMAT_VERSION = 1


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write the versioned container (layout documented in docs/param_format.md)."""
    entries = []
    blobs = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    header = json.dumps({"kind": kind, "meta": meta, "arrays": entries}, sort_keys=True).encode()
    payload = b"".join(blobs)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(header + payload)))


def read_container(path, kind: str):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != MAGIC:
        raise ParamFileError(f"{path}: not a parameter container (bad magic)")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise ParamFileError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if len(data) < 20 + hlen:
        raise ParamFileError(f"{path}: truncated file")
    header_bytes = data[16:16 + hlen]
    payload = data[16 + hlen:-4]
    (crc,) = struct.unpack("<I", data[-4:])
    if crc != zlib.crc32(header_bytes + payload):
        raise ParamFileError(f"{path}: checksum mismatch")
    try:
        header = json.loads(header_bytes)
    except ValueError as exc:
        raise ParamFileError(f"{path}: unreadable header ({exc})") from None
    if header.get("kind") != kind:
        raise ParamFileError(f"{path}: holds {header.get('kind')!r}, expected {kind!r}")
    arrays = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) * 8
        arrays[entry["name"]] = np.frombuffer(payload[offset:offset + n], dtype="<f8").reshape(shape).copy()
        offset += n
    if offset != len(payload):
        raise ParamFileError(f"{path}: payload size does not match header")
    return header["meta"], arrays


def save_params(net: Network, path) -> None:
    opt = net.optimizer
    arrays = dict(net.params)
    arrays.update({f"buffer:{k}": v for k, v in net.buffers.items()})
    arrays.update({f"adam_m:{k}": v for k, v in opt.m.items()})
    arrays.update({f"adam_v:{k}": v for k, v in opt.v.items()})
    meta = {
        "architecture": net.arch.to_dict(),
        "optimizer": {"lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps, "t": opt.t},
        "version": net.version,
    }
    write_container(path, "network", meta, arrays)


def load_params(path, expected: Architecture | None = None) -> Network:
    """Load a network; refuses files whose architecture differs from ``expected``."""
    meta, arrays = read_container(path, "network")
    arch = Architecture.from_dict(meta["architecture"])
    if expected is not None and arch != expected:
        raise ParamFileError(f"{path}: architecture mismatch ({arch} vs expected {expected})")
    o = meta["optimizer"]
    net = Network(arch, optimizer=Adam(o["lr"], o["beta1"], o["beta2"], o["eps"], o["t"]))
    for name, arr in arrays.items():
        prefix, _, rest = name.partition(":")
        if not rest:
            target, key = net.params, name
        elif prefix == "buffer":
            target, key = net.buffers, rest
        elif prefix == "adam_m":
            target, key = net.optimizer.m, rest
        elif prefix == "adam_v":
            target, key = net.optimizer.v, rest
        else:
            raise ParamFileError(f"{path}: unknown array {name!r}")
        if target is not net.optimizer.m and target is not net.optimizer.v:
            if key not in target or target[key].shape != arr.shape:
                raise ParamFileError(f"{path}: array {name!r} does not fit the architecture")
        target[key] = arr
    net.version = meta["version"]
    return net
