"""Forward-mode differentiation engine.

Every metric supplies an evaluator ``F(params, x, y)`` written with ``jax.numpy``.
All geometric quantities are obtained from it by nested ``jax.jacfwd`` (exact
forward-mode derivatives, dual numbers under the hood), never by finite
differences. One :class:`Kernel` is built per evaluator function and holds three
compiled entry points:

* ``F``: single-point evaluation of the Finsler function,
* ``chunk``: a fixed-length ``lax.scan`` of RK4 geodesic steps,
* ``bundle``: a vmapped batch returning ``(F, g, G, Gamma, R)``.

Metric parameters are traced arguments, so ``sphere(2, 1)`` and ``sphere(2, 4)``
share compiled code.

Curvature convention: ``R^i_k = 2 dG^i/dx^k - y^j d2G^i/dx^j dy^k
+ 2 G^j d2G^i/dy^j dy^k - dG^i/dy^j dG^j/dy^k``, which gives
``R^i_k = c (F^2 delta^i_k - y^i g_kj y^j)`` for constant flag curvature ``c``,
so the round sphere of curvature ``a`` has ``Ric = (n-1) a > 0``.
"""
from functools import lru_cache

import jax
import jax.numpy as jnp
import numpy as np
from jax import lax

CHUNK = 256
BATCH = 512
SMALL_BATCH = 8


def _fundamental(F2):
    def g(p, x, y):
        h = jax.jacfwd(jax.jacfwd(F2, 2), 2)(p, x, y)
        return 0.25 * (h + h.T)

    return g


def _spray(F2, g):
    def spray(p, x, y):
        dy = jax.jacfwd(F2, 2)
        mixed = jax.jacfwd(dy, 1)(p, x, y)  # [l, k] = d2F2 / dy^l dx^k
        rhs = mixed @ y - jax.jacfwd(F2, 1)(p, x, y)
        return 0.25 * jnp.linalg.solve(g(p, x, y), rhs)

    return spray


def _point(g, spray):
    """All point quantities with each derivative level traced once."""

    def point(p, x, y):
        def gfun(x, y):
            h = g(p, x, y)
            return h, h

        (gx, gy), gm = jax.jacfwd(gfun, (0, 1), has_aux=True)(x, y)  # [s, j, k]

        def sp(x, y):
            G = spray(p, x, y)
            return G, G

        def level1(x, y):
            Gy, G = jax.jacfwd(sp, 1, has_aux=True)(x, y)
            return Gy, (Gy, G)

        # Gyx[i, k, j] = d2G^i / dy^k dx^j, Gyy likewise in y
        (Gyx, Gyy), (Gy, G) = jax.jacfwd(level1, (0, 1), has_aux=True)(x, y)
        Gx = jax.jacfwd(spray, 1)(p, x, y)

        # Chern: Gamma^i_jk = 1/2 g^is (delta_k g_sj + delta_j g_sk - delta_s g_jk),
        # delta_k = d/dx^k - N^m_k d/dy^m with N = dG/dy
        dg = gx - jnp.einsum("sjm,mk->sjk", gy, Gy)
        low = 0.5 * (dg + jnp.einsum("skj->sjk", dg) - jnp.einsum("jks->sjk", dg))
        gam = jnp.einsum("is,sjk->ijk", jnp.linalg.inv(gm), low)
        gam = 0.5 * (gam + jnp.einsum("ikj->ijk", gam))

        R = (
            2.0 * Gx
            - jnp.einsum("j,ikj->ik", y, Gyx)
            + 2.0 * jnp.einsum("j,ikj->ik", G, Gyy)
            - Gy @ Gy
        )
        return gm, G, gam, R

    return point


class Kernel:
    """Compiled geometry for one evaluator function."""

    def __init__(self, evaluator):
        self.evaluator = evaluator

        def F2(p, x, y):
            return evaluator(p, x, y) ** 2

        g = _fundamental(F2)
        spray = _spray(F2, g)
        geometry = _point(g, spray)
        spray_j = jax.jit(spray)

        def rhs(p, x, v):
            return v, -2.0 * spray_j(p, x, v)

        def rk4(p, x, v, h):
            k1x, k1v = rhs(p, x, v)
            k2x, k2v = rhs(p, x + 0.5 * h * k1x, v + 0.5 * h * k1v)
            k3x, k3v = rhs(p, x + 0.5 * h * k2x, v + 0.5 * h * k2v)
            k4x, k4v = rhs(p, x + h * k3x, v + h * k3v)
            return (
                x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x),
                v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v),
            )

        def chunk(p, x0, v0, widths):
            def body(carry, h):
                x, v = carry
                xm, vm = rk4(p, x, v, 0.5 * h)
                x1, v1 = rk4(p, x, v, h)
                return (x1, v1), (xm, vm, x1, v1, evaluator(p, x1, v1))

            _, out = lax.scan(body, (x0, v0), widths)
            return out

        def point(p, x, y):
            return (evaluator(p, x, y),) + geometry(p, x, y)

        self._F = jax.jit(evaluator)
        self._chunk = jax.jit(chunk)
        self._bundle = jax.jit(jax.vmap(point, in_axes=(None, 0, 0)))

    def F(self, params, x, y):
        return float(self._F(params, jnp.asarray(x, float), jnp.asarray(y, float)))

    def chunk(self, params, x0, v0, widths):
        """RK4 steps from ``(x0, v0)`` with the given widths (padded to ``CHUNK``).

        Returns numpy arrays ``(x_mid, v_mid, x_end, v_end, F_end)`` of the real steps.
        """
        widths = np.asarray(widths, float)
        m = len(widths)
        padded = np.zeros(CHUNK)
        padded[:m] = widths
        out = self._chunk(params, jnp.asarray(x0, float), jnp.asarray(v0, float), jnp.asarray(padded))
        return tuple(np.asarray(a)[:m] for a in out)

    def bundle(self, params, xs, ys):
        """Batched ``(F, g, G, Gamma, R)`` at points ``xs``/``ys`` of shape (m, n).

        Small queries run in batches of ``SMALL_BATCH``, everything else in
        batches of ``BATCH``; the tail batch is padded.
        """
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        m, n = xs.shape
        if m == 0:
            raise ValueError("bundle needs at least one point")
        size = SMALL_BATCH if m <= SMALL_BATCH else BATCH
        outs = [[], [], [], [], []]
        for start in range(0, m, size):
            xb = xs[start:start + size]
            yb = ys[start:start + size]
            k = len(xb)
            if k < size:
                # pad with a harmless copy of the first point
                xb = np.concatenate([xb, np.repeat(xb[:1], size - k, axis=0)])
                yb = np.concatenate([yb, np.repeat(yb[:1], size - k, axis=0)])
            res = self._bundle(params, jnp.asarray(xb), jnp.asarray(yb))
            for acc, a in zip(outs, res):
                acc.append(np.asarray(a)[:k])
        F, g, G, gam, R = (np.concatenate(acc) for acc in outs)
        # XLA fusion can leave g asymmetric in the last bit; restore exact symmetry
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        return F, g, G, gam, R


@lru_cache(maxsize=None)
def get_kernel(evaluator):
    return Kernel(evaluator)
