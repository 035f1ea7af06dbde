"""Finite-difference gradient oracle shared by engine and planner tests."""

from __future__ import annotations

import numpy as np

from procplan.autodiff import Var


def check_gradients(build_loss, arrays: dict[str, np.ndarray], rng: np.random.Generator,
                    n_probes: int = 100, step: float = 1e-5,
                    rel_tol: float = 1e-4) -> tuple[float, int]:
    """Compare analytic gradients with central differences on random coordinates.

    `build_loss` maps {name: Var} to a scalar Var and must be a pure function
    of the arrays. Returns (max relative error, probes checked) and asserts
    every probe is within `rel_tol`. The step is scaled by each coordinate's
    magnitude; probes where both gradients are tiny pass on absolute error.
    """
    params = {name: Var(value.copy(), name=name) for name, value in arrays.items()}
    loss = build_loss(params)
    loss.backward()
    analytic = {name: var.grad.copy() for name, var in params.items()}

    names = sorted(arrays)
    sizes = np.array([arrays[name].size for name in names], dtype=np.float64)
    weights = sizes / sizes.sum()
    max_rel = 0.0
    for _ in range(n_probes):
        name = names[rng.choice(len(names), p=weights)]
        flat_index = int(rng.integers(arrays[name].size))
        base = arrays[name].reshape(-1)[flat_index]
        h = step * max(1.0, abs(base))

        def loss_at(value: float) -> float:
            shifted = {k: v.copy() for k, v in arrays.items()}
            shifted[name].reshape(-1)[flat_index] = value
            out = build_loss({k: Var(v) for k, v in shifted.items()})
            return float(out.value)

        numeric = (loss_at(base + h) - loss_at(base - h)) / (2.0 * h)
        a = analytic[name].reshape(-1)[flat_index]
        if abs(a - numeric) < 1e-8:
            continue
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        max_rel = max(max_rel, rel)
        assert rel < rel_tol, (
            f"gradient mismatch at {name}[{flat_index}]: analytic {a}, numeric {numeric}, "
            f"rel {rel}"
        )
    return max_rel, n_probes
