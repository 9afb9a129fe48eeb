"""Static computation graph with reverse-mode differentiation on numpy arrays.

Conventions:
  * Node shapes are per-sample shapes; every batched value carries an
    implicit leading batch axis at runtime, so a node of shape (n,) is fed
    or produced as an array of shape (B, n).  Scalar-per-sample nodes have
    shape () and runtime shape (B,).
  * Parameters and constants are shared across the batch and carry no
    batch axis.
  * `batch_mean` collapses the batch axis and yields a true scalar; it is
    the only op allowed to do so, and loss nodes handed to `backward`
    must be such scalars.
  * All shape checking happens at graph build time and raises ShapeError.

Compute dtype is fixed per graph (float32 by default, float64 for
gradient checking).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when node shapes do not validate at graph build time."""


class Node:
    __slots__ = ("id", "op", "inputs", "shape", "batched", "requires_grad", "meta")

    def __init__(self, id, op, inputs, shape, batched, requires_grad, meta=None):
        self.id = id
        self.op = op
        self.inputs = inputs
        self.shape = tuple(shape)
        self.batched = batched
        self.requires_grad = requires_grad
        self.meta = meta or {}

    @property
    def size(self):
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1

    def __repr__(self):
        return f"Node({self.id}, {self.op}, shape={self.shape}, batched={self.batched})"


class Cache:
    """Per-forward storage: node values plus op scratch kept for backward."""

    __slots__ = ("values", "aux", "batch")

    def __init__(self, n_nodes, batch):
        self.values = [None] * n_nodes
        self.aux = {}
        self.batch = batch

    def value(self, node):
        v = self.values[node.id]
        if v is None:
            raise KeyError(f"node {node!r} was not computed in this forward pass")
        return v


def _bcast(shape_a, shape_b):
    try:
        return np.broadcast_shapes(shape_a, shape_b)
    except ValueError:
        raise ShapeError(f"shapes {shape_a} and {shape_b} do not broadcast") from None


class Graph:
    """Topologically ordered op nodes; build once, run many times.

    Forward on immutable parameter sets is safe to call from multiple
    threads because all per-call state lives in the returned Cache.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.nodes: list[Node] = []
        self.inputs: dict[str, Node] = {}
        self.param_nodes: dict[str, Node] = {}

    # ------------------------------------------------------------------ leaves

    def _new(self, op, inputs, shape, batched, requires_grad, meta=None):
        node = Node(len(self.nodes), op, list(inputs), shape, batched, requires_grad, meta)
        self.nodes.append(node)
        return node

    def input(self, name, shape, integer=False, requires_grad=False):
        if name in self.inputs:
            raise ShapeError(f"duplicate input name {name!r}")
        node = self._new("input", [], shape, True, requires_grad and not integer,
                         {"name": name, "integer": integer})
        self.inputs[name] = node
        return node

    def param(self, name, shape):
        if name in self.param_nodes:
            raise ShapeError(f"duplicate parameter name {name!r}")
        node = self._new("param", [], shape, False, True, {"name": name})
        self.param_nodes[name] = node
        return node

    def const(self, value):
        arr = np.asarray(value, dtype=self.dtype)
        return self._new("const", [], arr.shape, False, False, {"value": arr})

    # ------------------------------------------------------------------ ops

    def relu(self, x):
        return self._new("relu", [x], x.shape, x.batched, x.requires_grad)

    def _binary(self, op, a, b):
        shape = _bcast(a.shape, b.shape)
        return self._new(op, [a, b], shape, a.batched or b.batched,
                         a.requires_grad or b.requires_grad)

    def add(self, a, b):
        return self._binary("add", a, b)

    def sub(self, a, b):
        return self._binary("sub", a, b)

    def mul(self, a, b):
        return self._binary("mul", a, b)

    def scale(self, x, c):
        return self._new("scale", [x], x.shape, x.batched, x.requires_grad, {"c": float(c)})

    def dense(self, x, w, b):
        """out[i] = dot(w[i], x) + b[i] over a flattened input."""
        if len(x.shape) != 1:
            raise ShapeError(f"dense input must be flat, got {x.shape}")
        if len(w.shape) != 2 or w.shape[1] != x.shape[0]:
            raise ShapeError(f"dense weights {w.shape} do not match input {x.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(f"dense bias {b.shape} does not match weights {w.shape}")
        return self._new("dense", [x, w, b], (w.shape[0],), x.batched or w.batched or b.batched,
                         x.requires_grad or w.requires_grad or b.requires_grad)

    def conv2d(self, x, kernel, bias):
        """Same-padded stride-1 cross-correlation over (C,H,W) maps."""
        if len(x.shape) != 3:
            raise ShapeError(f"conv2d input must be (C,H,W), got {x.shape}")
        if len(kernel.shape) != 4:
            raise ShapeError(f"conv2d kernel must be (F,C,k,k), got {kernel.shape}")
        f, c, kh, kw = kernel.shape
        if kh != kw or kh % 2 == 0:
            raise ShapeError(f"conv2d kernel must be square with odd size, got {kh}x{kw}")
        if c != x.shape[0]:
            raise ShapeError(f"kernel channels {c} do not match input channels {x.shape[0]}")
        if bias.shape != (f,):
            raise ShapeError(f"conv2d bias {bias.shape} does not match {f} filters")
        out_shape = (f, x.shape[1], x.shape[2])
        return self._new("conv2d", [x, kernel, bias], out_shape, True,
                         x.requires_grad or kernel.requires_grad or bias.requires_grad)

    def reshape(self, x, new_shape):
        new_shape = tuple(int(s) for s in new_shape)
        if int(np.prod(new_shape, dtype=np.int64)) != x.size:
            raise ShapeError(f"cannot reshape {x.shape} to {new_shape}")
        return self._new("reshape", [x], new_shape, x.batched, x.requires_grad)

    def concat(self, parts):
        """Concatenate flat per-sample vectors."""
        if not parts:
            raise ShapeError("concat needs at least one input")
        for p in parts:
            if len(p.shape) != 1:
                raise ShapeError(f"concat inputs must be flat, got {p.shape}")
        batched = any(p.batched for p in parts)
        total = sum(p.shape[0] for p in parts)
        return self._new("concat", list(parts), (total,), batched,
                         any(p.requires_grad for p in parts))

    def reduce_mean(self, x):
        """Mean over the per-sample axes (global mean within one sample)."""
        return self._new("reduce_mean", [x], (), x.batched, x.requires_grad)

    def reduce_sum(self, x):
        return self._new("reduce_sum", [x], (), x.batched, x.requires_grad)

    def gather(self, x, idx):
        """Per-sample element select: out = x[idx]."""
        if len(x.shape) != 1:
            raise ShapeError(f"gather input must be flat, got {x.shape}")
        if idx.shape != () or not idx.meta.get("integer"):
            raise ShapeError("gather index must be a scalar integer input")
        return self._new("gather", [x, idx], (), x.batched, x.requires_grad)

    def huber(self, pred, target, kappa=1.0):
        """Elementwise Huber: 0.5 d^2 inside |d|<=kappa, linear outside."""
        if kappa <= 0:
            raise ShapeError("huber kappa must be positive")
        if pred.shape != target.shape or pred.batched != target.batched:
            raise ShapeError(f"huber operands disagree: {pred.shape} vs {target.shape}")
        return self._new("huber", [pred, target], pred.shape, pred.batched,
                         pred.requires_grad or target.requires_grad, {"kappa": float(kappa)})

    def square(self, x):
        return self.mul(x, x)

    def batch_mean(self, x):
        """Mean over the batch and all per-sample axes -> true scalar."""
        if not x.batched:
            raise ShapeError("batch_mean input must be batched")
        return self._new("batch_mean", [x], (), False, x.requires_grad)

    # ------------------------------------------------------------------ runtime

    def _needed(self, outputs):
        need = set()
        stack = [n.id for n in outputs]
        while stack:
            i = stack.pop()
            if i in need:
                continue
            need.add(i)
            stack.extend(inp.id for inp in self.nodes[i].inputs)
        return need

    def forward(self, params, feeds, outputs=None, check_finite=False):
        """Run the graph; `params` maps parameter names to arrays.

        `feeds` maps input names to arrays of shape (B, *node.shape).
        Returns a Cache holding every computed node value.
        """
        if outputs is None:
            outputs = [self.nodes[-1]]
        elif isinstance(outputs, Node):
            outputs = [outputs]
        need = self._needed(outputs)

        batch = None
        for name, node in self.inputs.items():
            if node.id in need:
                if name not in feeds:
                    raise KeyError(f"missing feed for input {name!r}")
                arr = np.asarray(feeds[name])
                if arr.shape[1:] != node.shape:
                    raise ShapeError(
                        f"feed {name!r} has shape {arr.shape}, expected (B, {node.shape})")
                if batch is None:
                    batch = arr.shape[0]
                elif arr.shape[0] != batch:
                    raise ShapeError(f"feed {name!r} batch {arr.shape[0]} != {batch}")
        if batch is None:
            batch = 1

        cache = Cache(len(self.nodes), batch)
        vals = cache.values
        for node in self.nodes:
            if node.id not in need:
                continue
            op = node.op
            if op == "input":
                arr = np.asarray(feeds[node.meta["name"]])
                if node.meta.get("integer"):
                    arr = arr.astype(np.int64, copy=False)
                else:
                    arr = arr.astype(self.dtype, copy=False)
                vals[node.id] = arr
            elif op == "param":
                name = node.meta["name"]
                try:
                    arr = params[name]
                except KeyError:
                    raise KeyError(f"missing parameter {name!r}") from None
                if arr.shape != node.shape:
                    raise ShapeError(f"parameter {name!r} has shape {arr.shape}, "
                                     f"graph expects {node.shape}")
                vals[node.id] = arr
            elif op == "const":
                vals[node.id] = node.meta["value"]
            else:
                vals[node.id] = self._fwd(node, cache)
            if check_finite and not node.meta.get("integer") and op != "input":
                if not np.all(np.isfinite(vals[node.id])):
                    raise FloatingPointError(f"non-finite value at {node!r}")
        return cache

    def _aligned(self, node, cache):
        """Input values of a broadcast op, expanded to a common per-sample rank."""
        rank = len(node.shape)
        out = []
        for inp in node.inputs:
            v = cache.values[inp.id]
            pad = (1,) * (rank - len(inp.shape))
            if inp.batched:
                out.append(v.reshape((v.shape[0],) + pad + inp.shape))
            else:
                out.append(v.reshape(pad + inp.shape))
        return out

    def _fwd(self, node, cache):
        vals = cache.values
        op = node.op
        a = vals[node.inputs[0].id] if node.inputs else None
        if op == "relu":
            return np.maximum(a, 0)
        if op in ("add", "sub", "mul"):
            x, y = self._aligned(node, cache)
            if op == "add":
                return x + y
            if op == "sub":
                return x - y
            return x * y
        if op == "scale":
            return a * self.dtype.type(node.meta["c"])
        if op == "dense":
            w = vals[node.inputs[1].id]
            b = vals[node.inputs[2].id]
            if node.inputs[0].batched:
                return a @ w.T + b
            return w @ a + b
        if op == "conv2d":
            return self._fwd_conv(node, cache)
        if op == "reshape":
            if node.inputs[0].batched:
                return a.reshape((a.shape[0],) + node.shape)
            return a.reshape(node.shape)
        if op == "concat":
            axis = 1 if node.batched else 0
            parts = []
            b = cache.batch
            for inp in node.inputs:
                v = vals[inp.id]
                if node.batched and not inp.batched:
                    v = np.broadcast_to(v, (b,) + inp.shape)
                parts.append(v)
            return np.concatenate(parts, axis=axis)
        if op == "reduce_mean":
            if node.inputs[0].batched:
                return a.reshape(a.shape[0], -1).mean(axis=1)
            return np.asarray(a.mean(), dtype=a.dtype)
        if op == "reduce_sum":
            if node.inputs[0].batched:
                return a.reshape(a.shape[0], -1).sum(axis=1)
            return np.asarray(a.sum(), dtype=a.dtype)
        if op == "gather":
            idx = vals[node.inputs[1].id]
            return a[np.arange(a.shape[0]), idx]
        if op == "huber":
            t = vals[node.inputs[1].id]
            k = node.meta["kappa"]
            d = a - t
            ad = np.abs(d)
            return np.where(ad <= k, 0.5 * d * d, k * (ad - 0.5 * k)).astype(a.dtype)
        if op == "batch_mean":
            return np.asarray(a.mean(), dtype=a.dtype)
        raise AssertionError(f"unknown op {op}")

    def _fwd_conv(self, node, cache):
        x = cache.values[node.inputs[0].id]
        kern = cache.values[node.inputs[1].id]
        bias = cache.values[node.inputs[2].id]
        f, c, k, _ = kern.shape
        pad = k // 2
        bsz, _, h, w = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (B,C,H,W,k,k)
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(bsz, h * w, c * k * k)
        # one flat GEMM over all batch rows beats a loop of per-sample matmuls
        out = (cols.reshape(bsz * h * w, -1) @ kern.reshape(f, -1).T + bias)
        out = out.reshape(bsz, h * w, f)
        cache.aux[node.id] = cols
        return np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(bsz, f, h, w)

    # ------------------------------------------------------------------ backward

    def backward(self, cache, loss_node, want_inputs=False):
        """Gradients of a scalar loss w.r.t. every reachable parameter.

        With want_inputs=True also returns gradients for inputs declared
        with requires_grad (used by gradient checking).
        """
        if loss_node.batched or loss_node.shape != ():
            raise ShapeError("loss node must be a non-batched scalar")
        if cache.values[loss_node.id] is None:
            raise ShapeError("loss node was not computed in this forward pass")

        grads = [None] * len(self.nodes)
        grads[loss_node.id] = np.asarray(1.0, dtype=self.dtype)
        for node in reversed(self.nodes[: loss_node.id + 1]):
            g = grads[node.id]
            if g is None or not node.inputs:
                continue
            self._bwd(node, g, grads, cache)

        out = {}
        for name, node in self.param_nodes.items():
            if grads[node.id] is not None:
                out[name] = grads[node.id]
        if want_inputs:
            ing = {name: grads[node.id] for name, node in self.inputs.items()
                   if node.requires_grad and grads[node.id] is not None}
            return out, ing
        return out

    @staticmethod
    def _accum(grads, node, g):
        if not node.requires_grad:
            return
        if grads[node.id] is None:
            grads[node.id] = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            grads[node.id] = grads[node.id] + g

    def _reduce_to(self, g, out_node, in_node, batch):
        """Sum-reduce an output gradient back to a broadcast input's shape."""
        out_rank = len(out_node.shape)
        if out_node.batched:
            per = g
            if not in_node.batched:
                per = per.sum(axis=0)
                return self._shrink(per, out_node.shape, in_node.shape)
            extra = out_rank - len(in_node.shape)
            if extra:
                per = per.sum(axis=tuple(range(1, 1 + extra)))
            axes = tuple(i + 1 for i, (od, td) in enumerate(zip(out_node.shape[extra:], in_node.shape))
                         if td == 1 and od != 1)
            if axes:
                per = per.sum(axis=axes, keepdims=True)
            return per.reshape((g.shape[0],) + in_node.shape)
        return self._shrink(g, out_node.shape, in_node.shape)

    @staticmethod
    def _shrink(g, out_shape, in_shape):
        extra = len(out_shape) - len(in_shape)
        if extra:
            g = g.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, (od, td) in enumerate(zip(out_shape[extra:], in_shape))
                     if td == 1 and od != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return g.reshape(in_shape)

    def _bwd(self, node, g, grads, cache):
        vals = cache.values
        op = node.op
        ins = node.inputs
        if op == "relu":
            if ins[0].requires_grad:
                self._accum(grads, ins[0], g * (vals[node.id] > 0))
        elif op in ("add", "sub"):
            if ins[0].requires_grad:
                self._accum(grads, ins[0], self._reduce_to(g, node, ins[0], cache.batch))
            if ins[1].requires_grad:
                gb = self._reduce_to(g, node, ins[1], cache.batch)
                self._accum(grads, ins[1], gb if op == "add" else -gb)
        elif op == "mul":
            x, y = self._aligned(node, cache)
            if ins[0].requires_grad:
                self._accum(grads, ins[0], self._reduce_to(g * y, node, ins[0], cache.batch))
            if ins[1].requires_grad:
                self._accum(grads, ins[1], self._reduce_to(g * x, node, ins[1], cache.batch))
        elif op == "scale":
            if ins[0].requires_grad:
                self._accum(grads, ins[0], g * self.dtype.type(node.meta["c"]))
        elif op == "dense":
            x, w, b = ins
            xv, wv = vals[x.id], vals[w.id]
            if x.batched:
                if w.requires_grad:
                    self._accum(grads, w, g.T @ xv)
                if b.requires_grad:
                    self._accum(grads, b, g.sum(axis=0))
                if x.requires_grad:
                    self._accum(grads, x, g @ wv)
            else:
                if w.requires_grad:
                    self._accum(grads, w, np.outer(g, xv))
                if b.requires_grad:
                    self._accum(grads, b, g)
                if x.requires_grad:
                    self._accum(grads, x, g @ wv)
        elif op == "conv2d":
            self._bwd_conv(node, g, grads, cache)
        elif op == "reshape":
            src = ins[0]
            shape = ((g.shape[0],) + src.shape) if src.batched else src.shape
            if src.requires_grad:
                self._accum(grads, src, g.reshape(shape))
        elif op == "concat":
            axis = 1 if node.batched else 0
            off = 0
            for inp in ins:
                n = inp.shape[0]
                if inp.requires_grad:
                    piece = g[:, off:off + n] if axis == 1 else g[off:off + n]
                    if node.batched and not inp.batched:
                        piece = piece.sum(axis=0)
                    self._accum(grads, inp, piece)
                off += n
        elif op in ("reduce_mean", "reduce_sum"):
            src = ins[0]
            if src.requires_grad:
                if op == "reduce_mean":
                    g = g / src.size
                if src.batched:
                    gg = np.broadcast_to(g.reshape((-1,) + (1,) * len(src.shape)),
                                         (g.shape[0],) + src.shape)
                else:
                    gg = np.broadcast_to(g, src.shape)
                self._accum(grads, src, gg)
        elif op == "gather":
            src, idx = ins
            if src.requires_grad:
                gx = np.zeros((g.shape[0],) + src.shape, dtype=g.dtype)
                gx[np.arange(g.shape[0]), vals[idx.id]] = g
                self._accum(grads, src, gx)
        elif op == "huber":
            p, t = ins
            k = node.meta["kappa"]
            d = np.clip(vals[p.id] - vals[t.id], -k, k)
            if p.requires_grad:
                self._accum(grads, p, g * d)
            if t.requires_grad:
                self._accum(grads, t, -(g * d))
        elif op == "batch_mean":
            src = ins[0]
            if src.requires_grad:
                v = vals[src.id]
                self._accum(grads, src, np.broadcast_to(g / v.size, v.shape))
        else:
            raise AssertionError(f"no backward for op {op}")

    def _bwd_conv(self, node, g, grads, cache):
        x, kern, bias = node.inputs
        kv = cache.values[kern.id]
        f, c, k, _ = kv.shape
        pad = k // 2
        bsz, _, h, w = g.shape
        g2 = np.ascontiguousarray(g.reshape(bsz, f, h * w).transpose(0, 2, 1))  # (B,HW,F)
        cols = cache.aux[node.id]
        if kern.requires_grad:
            dk = np.tensordot(g2, cols, axes=([0, 1], [0, 1]))  # (F, C*k*k)
            self._accum(grads, kern, dk.reshape(kv.shape))
        if bias.requires_grad:
            self._accum(grads, bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = g2.reshape(bsz * h * w, f) @ kv.reshape(f, -1)  # (B*HW,C*k*k)
            dcols = dcols.reshape(bsz, h, w, c, k, k)
            dxp = np.zeros((bsz, c, h + 2 * pad, w + 2 * pad), dtype=g.dtype)
            for dy in range(k):
                for dx in range(k):
                    dxp[:, :, dy:dy + h, dx:dx + w] += dcols[:, :, :, :, dy, dx].transpose(0, 3, 1, 2)
            self._accum(grads, x, dxp[:, :, pad:pad + h, pad:pad + w])
