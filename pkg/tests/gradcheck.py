"""Central-difference gradient oracles for the decoder layers.

ReLU makes the loss piecewise smooth: a finite-difference probe is only a
valid derivative oracle when no activation mask changes across the +-eps
evaluations.  Probes that straddle a kink are detected and redrawn.
"""

import numpy as np

EPS = 1e-4
REL_TOL = 1e-3


def rel_err(analytic: float, fd: float) -> float:
    return abs(analytic - fd) / (abs(analytic) + 1e-8)


def model_relu_masks(model) -> list[np.ndarray]:
    masks = []
    for block in (model.res1, model.res2):
        masks.append(block.relu1._mask.copy())
        masks.append(block.relu_out._mask.copy())
    return masks


def check_model_params(model, loss_fn, grads, rng, n_checks=50, eps=EPS):
    """FD-check ``n_checks`` random parameters of the full decoder.

    ``loss_fn`` recomputes the scalar loss at the current parameters (and
    refreshes the cached ReLU masks); ``grads`` maps parameter names to
    analytic gradients.  Returns the worst relative error over valid probes.
    """
    loss_fn()
    base_masks = model_relu_masks(model)

    def masks_stable() -> bool:
        return all(
            np.array_equal(a, b) for a, b in zip(base_masks, model_relu_masks(model))
        )

    params = model.params
    sizes = np.array([p.value.size for p in params])
    worst = 0.0
    checked = 0
    attempts = 0
    while checked < n_checks:
        attempts += 1
        assert attempts < 40 * n_checks, "too many kink-straddling probes"
        p = params[int(rng.choice(len(params), p=sizes / sizes.sum()))]
        idx = int(rng.integers(p.value.size))
        flat = p.value.ravel()
        orig = flat[idx]
        flat[idx] = orig + eps
        up = loss_fn()
        up_ok = masks_stable()
        flat[idx] = orig - eps
        down = loss_fn()
        down_ok = masks_stable()
        flat[idx] = orig
        if not (up_ok and down_ok):
            continue
        fd = (up - down) / (2 * eps)
        worst = max(worst, rel_err(float(grads[p.name].ravel()[idx]), fd))
        checked += 1
    return worst


def check_layer(layer, x, rng, n_param_checks=50, n_input_checks=20, eps=EPS):
    """FD-check one layer under a fixed linear readout of its output.

    Loss is sum(forward(x) * W) for a frozen random W, so dL/dy = W exactly
    and the layer's backward pass produces both parameter and input
    gradients.  Caller picks ``x`` away from any ReLU kinks.  Returns the
    worst relative error seen.
    """
    x = x.astype(np.float64)
    readout = rng.standard_normal(layer.forward(x).shape)

    def loss_at(xs) -> float:
        return float((layer.forward(xs) * readout).sum())

    for p in layer.params:
        p.grad[...] = 0.0
    loss_at(x)
    dx = layer.backward(readout)
    worst = 0.0

    for p in layer.params:
        flat = p.value.ravel()
        n = min(n_param_checks, flat.size)
        for idx in rng.choice(flat.size, size=n, replace=False):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = loss_at(x)
            flat[idx] = orig - eps
            down = loss_at(x)
            flat[idx] = orig
            worst = max(
                worst, rel_err(float(p.grad.ravel()[idx]), (up - down) / (2 * eps))
            )

    for idx in rng.choice(x.size, size=min(n_input_checks, x.size), replace=False):
        bumped = x.copy().ravel()
        orig = bumped[idx]
        bumped[idx] = orig + eps
        up = loss_at(bumped.reshape(x.shape))
        bumped[idx] = orig - eps
        down = loss_at(bumped.reshape(x.shape))
        worst = max(worst, rel_err(float(dx.ravel()[idx]), (up - down) / (2 * eps)))
    return worst
