"""Minimal reverse-mode differentiation on dense numpy arrays.

Every trainable quantity in the package is a :class:`ParamArray`. Operations
are methods on a :class:`Tape`; each one computes its value eagerly and, when
any input requires a gradient, records a closure that maps the output adjoint
to input adjoints. :meth:`Tape.backward` replays the closures in reverse
record order, so gradient accumulation order is fixed and runs are
bit-reproducible.

Only the handful of operations the renderer needs exist. There is no general
broadcasting.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, ShapeError, UsageError



class ParamArray:
    """A dense array of values plus an equally shaped array of adjoints.

    Leaves (created directly, ``requires_grad=True``) own a zero-initialised
    ``grads`` buffer that :meth:`Tape.backward` accumulates into. Intermediate
    results produced by tape operations get ``grads`` filled in during the
    backward pass.
    """

    __slots__ = ("values", "grads", "requires_grad", "name", "is_leaf")

    def __init__(self, values, requires_grad=False, name=None, _leaf=True):
        values = np.asarray(values)
        if values.dtype.kind != "f":
            values = values.astype(np.float64)
        if not np.isfinite(values).all():
            raise NumericError(f"non-finite values in {name or 'ParamArray'}")
        self.values = values
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.is_leaf = _leaf
        self.grads = np.zeros_like(values) if (requires_grad and _leaf) else None

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def size(self):
        return self.values.size

    def zero_grad(self):
        if self.grads is None:
            self.grads = np.zeros_like(self.values)
        else:
            self.grads.fill(0)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"ParamArray{label}(shape={self.values.shape}, dtype={self.values.dtype})"


def _check_finite(arr, where):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {where}")


def _values(x):
    return x.values if isinstance(x, ParamArray) else np.asarray(x)


class _Record:
    __slots__ = ("out", "parents", "backward", "op")

    def __init__(self, out, parents, backward, op):
        self.out = out
        self.parents = parents
        self.backward = backward
        self.op = op


class Tape:
    """Ordered record of operations for one forward pass.

    A tape is single-use: after :meth:`backward` it is cleared and refuses a
    second backward. ``Tape(enabled=False)`` evaluates operations without
    recording anything (inference, finite differences).
    """

    def __init__(self, enabled=True):
        self.enabled = enabled
        self._records: list[_Record] = []
        self._consumed = False

    def __len__(self):
        return len(self._records)

    # -- recording -----------------------------------------------------
    def record(self, op: str, value, parents: Sequence[ParamArray], backward: Callable):
        """Wrap ``value`` as the output of ``op`` and remember how to pull back.

        ``backward(g)`` must return one adjoint (or ``None``) per parent.
        """
        if self._consumed:
            raise UsageError("tape already consumed by backward(); start a new Tape")
        _check_finite(value, op)
        needs = self.enabled and any(p.requires_grad for p in parents)
        out = ParamArray.__new__(ParamArray)
        out.values = value
        out.requires_grad = needs
        out.name = op
        out.is_leaf = False
        out.grads = None
        if needs:
            self._records.append(_Record(out, tuple(parents), backward, op))
        return out

    def backward(self, seed=None, output: ParamArray | None = None):
        """Propagate ``seed`` from ``output`` (default: last recorded result)."""
        if self._consumed:
            raise UsageError("backward() called twice on the same tape")
        self._consumed = True
        if not self._records:
            return
        if output is None:
            output = self._records[-1].out
        if seed is None:
            if output.size != 1:
                raise ShapeError("seed required for non-scalar output")
            seed = np.ones_like(output.values)
        seed = np.asarray(seed, dtype=output.dtype)
        if seed.shape != output.shape:
            raise ShapeError(f"seed shape {seed.shape} does not match output {output.shape}")
        pending = {id(output): seed}
        for rec in reversed(self._records):
            g = pending.pop(id(rec.out), None)
            if g is None:
                continue
            rec.out.grads = g
            parent_grads = rec.backward(g)
            for p, pg in zip(rec.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if pg.shape != p.shape:
                    raise ShapeError(f"{rec.op}: adjoint shape {pg.shape} != input shape {p.shape}")
                if p.is_leaf:
                    # non-finite adjoints propagate, so checking at the leaves suffices
                    _check_finite(pg, f"adjoint of {rec.op}")
                    p.grads += pg
                else:
                    key = id(p)
                    prev = pending.get(key)
                    pending[key] = pg if prev is None else prev + pg
        self._records.clear()

    # -- linear algebra ------------------------------------------------
    def matmul(self, a: ParamArray, b: ParamArray) -> ParamArray:
        av, bv = _values(a), _values(b)
        if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul shapes {av.shape} x {bv.shape}")
        # tape outputs are already checked; leaves may have been edited in place
        for x in (a, b):
            if not isinstance(x, ParamArray) or x.is_leaf:
                _check_finite(_values(x), "matmul input")
        with np.errstate(over="ignore", invalid="ignore"):
            out = av @ bv
        return self.record("matmul", out, (a, b), lambda g: (g @ bv.T, av.T @ g))

    def add_bias(self, x: ParamArray, b: ParamArray) -> ParamArray:
        xv, bv = x.values, b.values
        if xv.ndim != 2 or bv.shape != (xv.shape[1],):
            raise ShapeError(f"add_bias shapes {xv.shape} + {bv.shape}")
        return self.record("add_bias", xv + bv, (x, b), lambda g: (g, g.sum(axis=0)))

    def add(self, a: ParamArray, b: ParamArray) -> ParamArray:
        if a.shape != b.shape:
            raise ShapeError(f"add shapes {a.shape} + {b.shape}")
        return self.record("add", a.values + b.values, (a, b), lambda g: (g, g))

    def mul(self, a: ParamArray, b: ParamArray) -> ParamArray:
        if a.shape != b.shape:
            raise ShapeError(f"mul shapes {a.shape} * {b.shape}")
        av, bv = a.values, b.values
        return self.record("mul", av * bv, (a, b), lambda g: (g * bv, g * av))

    def scale(self, x: ParamArray, c) -> ParamArray:
        """Multiply by a constant array of the same shape (not differentiated)."""
        c = np.asarray(c, dtype=x.dtype)
        if c.shape != x.shape:
            raise ShapeError(f"scale shapes {x.shape} * {c.shape}")
        return self.record("scale", x.values * c, (x,), lambda g: (g * c,))

    def sum(self, x: ParamArray) -> ParamArray:
        shape = x.shape
        return self.record(
            "sum", np.asarray(x.values.sum(), dtype=x.dtype).reshape(1),
            (x,), lambda g: (np.full(shape, g[0], dtype=g.dtype),))

    def reshape(self, x: ParamArray, shape) -> ParamArray:
        old = x.shape
        return self.record("reshape", x.values.reshape(shape), (x,), lambda g: (g.reshape(old),))

    def concat(self, xs: Sequence[ParamArray]) -> ParamArray:
        """Concatenate 2-D arrays along columns."""
        rows = {x.shape[0] for x in xs}
        if len(rows) != 1 or any(x.values.ndim != 2 for x in xs):
            raise ShapeError(f"concat shapes {[x.shape for x in xs]}")
        splits = np.cumsum([x.shape[1] for x in xs])[:-1]
        return self.record(
            "concat", np.concatenate([x.values for x in xs], axis=1), tuple(xs),
            lambda g: tuple(np.split(g, splits, axis=1)))

    def columns(self, x: ParamArray, start: int, stop: int) -> ParamArray:
        """Columns ``start:stop`` of a 2-D array."""
        xv = x.values
        if xv.ndim != 2 or not 0 <= start <= stop <= xv.shape[1]:
            raise ShapeError(f"columns {start}:{stop} of shape {xv.shape}")

        def back(g):
            full = np.zeros_like(xv)
            full[:, start:stop] = g
            return (full,)

        return self.record("columns", xv[:, start:stop], (x,), back)

    def mul_rows(self, x: ParamArray, s: ParamArray) -> ParamArray:
        """``x[i, :] * s[i]`` for x of shape (n, k) and s of shape (n,)."""
        xv, sv = x.values, s.values
        if xv.ndim != 2 or sv.shape != (xv.shape[0],):
            raise ShapeError(f"mul_rows shapes {xv.shape}, {sv.shape}")
        return self.record(
            "mul_rows", xv * sv[:, None], (x, s),
            lambda g: (g * sv[:, None], (g * xv).sum(axis=1)))

    def div_rows(self, x: ParamArray, s: ParamArray, eps=1e-10) -> ParamArray:
        """``x[i, :] / max(s[i], eps)``; no gradient to s where it is clamped."""
        xv, sv = x.values, s.values
        if xv.ndim != 2 or sv.shape != (xv.shape[0],):
            raise ShapeError(f"div_rows shapes {xv.shape}, {sv.shape}")
        live = sv > eps
        denom = np.where(live, sv, eps).astype(xv.dtype)
        out = xv / denom[:, None]

        def back(g):
            gx = g / denom[:, None]
            gs = np.where(live, -(g * out).sum(axis=1) / denom, 0).astype(sv.dtype)
            return gx, gs

        return self.record("div_rows", out, (x, s), back)

    # -- nonlinearities ------------------------------------------------
    def gelu(self, x: ParamArray) -> ParamArray:
        from . import kernels

        y, d = kernels.gelu(np.ascontiguousarray(x.values))
        return self.record("gelu", y, (x,), lambda g: (g * d,))

    def relu(self, x: ParamArray) -> ParamArray:
        xv = x.values
        mask = xv > 0
        return self.record("relu", np.where(mask, xv, 0).astype(xv.dtype), (x,), lambda g: (g * mask,))

    def sigmoid(self, x: ParamArray) -> ParamArray:
        xv = x.values
        y = (0.5 * (1.0 + np.tanh(0.5 * xv))).astype(xv.dtype)
        return self.record("sigmoid", y, (x,), lambda g: (g * y * (1 - y),))

    def identity(self, x: ParamArray) -> ParamArray:
        return x

    def activation(self, x: ParamArray, kind: str) -> ParamArray:
        if kind == "gelu":
            return self.gelu(x)
        if kind == "relu":
            return self.relu(x)
        if kind == "identity":
            return x
        raise ValueError(f"unknown activation {kind!r}")

    def trunc_exp(self, x: ParamArray, lo=-15.0, hi=15.0) -> ParamArray:
        """``exp(clip(x, lo, hi))``; zero gradient outside the clip range."""
        xv = x.values
        inside = (xv >= lo) & (xv <= hi)
        y = np.exp(np.clip(xv, lo, hi)).astype(xv.dtype)
        return self.record("trunc_exp", y, (x,), lambda g: (g * y * inside,))

    # -- losses --------------------------------------------------------
    def mse_loss(self, pred: ParamArray, target) -> ParamArray:
        tv = np.asarray(target, dtype=pred.dtype)
        if tv.shape != pred.shape:
            raise ShapeError(f"mse_loss shapes {pred.shape} vs {tv.shape}")
        diff = pred.values - tv
        count = diff.size
        loss = np.asarray((diff.astype(np.float64) ** 2).mean(), dtype=pred.dtype).reshape(1)
        return self.record("mse_loss", loss, (pred,), lambda g: (g[0] * 2.0 * diff / count,))


def backward(tape: Tape, seed=None, output: ParamArray | None = None):
    """Functional alias for :meth:`Tape.backward`."""
    tape.backward(seed, output)


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)


def finite_difference(f: Callable[[Tape], ParamArray], point: ParamArray, indices, h=1e-4):
    """Central differences of scalar ``f`` wrt the flat ``indices`` of ``point``."""
    flat = point.values.reshape(-1)
    out = np.empty(len(indices), dtype=np.float64)
    for j, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(Tape(enabled=False)).values.reshape(-1)[0])
        flat[i] = orig - h
        fm = float(f(Tape(enabled=False)).values.reshape(-1)[0])
        flat[i] = orig
        out[j] = (fp - fm) / (2 * h)
    return out


def analytic_grad(f: Callable[[Tape], ParamArray], params: Sequence[ParamArray]):
    """Zero ``params`` grads, run ``f`` on a fresh tape and backprop."""
    for p in params:
        p.zero_grad()
    tape = Tape()
    out = f(tape)
    if out.size != 1:
        raise ShapeError("grad_check needs a scalar-valued function")
    tape.backward()
    return [p.grads.copy() for p in params]


def grad_check(f: Callable[[Tape], ParamArray], point: ParamArray, h=1e-4, indices=None):
    """Max relative error between backprop and central differences.

    ``f`` builds a scalar from parameters that include ``point``; ``indices``
    restricts the probe to a subset of flat coordinates (default: all).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    if not point.requires_grad:
        raise UsageError("grad_check point must require gradients")
    (analytic,) = analytic_grad(f, [point])
    if indices is None:
        indices = np.arange(point.size)
    indices = np.asarray(indices)
    numeric = finite_difference(f, point, indices, h)
    errs = relative_error(analytic.reshape(-1)[indices], numeric)
    return float(errs.max()) if errs.size else 0.0
