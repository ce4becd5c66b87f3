"""Shared test utilities: independent oracles and a finite-difference checker."""

import math

import torch


def cumprod_oracle(betas):
    """Running product of (1 - beta) in extended precision, one beta at a time."""
    out = []
    acc = 1.0
    for b in betas:
        acc *= 1.0 - float(b)
        out.append(acc)
    return out


def finite_diff_grad(f, x, indices, h=1e-5):
    """Central finite differences of scalar f at flat positions of tensor x."""
    grads = []
    flat = x.reshape(-1)
    for i in indices:
        orig = flat[i].item()
        flat[i] = orig + h
        fp = float(f())
        flat[i] = orig - h
        fm = float(f())
        flat[i] = orig
        grads.append((fp - fm) / (2.0 * h))
    return grads


def check_param_grads(loss_fn, params, indices_per_param, h=1e-5, rtol=1e-3):
    """Compare autograd to central differences on chosen parameter coordinates.

    params must be float64 leaves. Returns the worst relative error seen.
    """
    for p in params:
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for p, indices in zip(params, indices_per_param):
        with torch.no_grad():
            fd = finite_diff_grad(lambda: loss_fn().detach(), p.data, indices, h=h)
        ag = [p.grad.reshape(-1)[i].item() for i in indices]
        for a, b in zip(ag, fd):
            scale = max(abs(a), abs(b), 1e-8)
            err = abs(a - b) / scale
            worst = max(worst, err)
            assert err <= rtol, f"grad mismatch: autograd {a} vs fd {b} (rel {err:.2e})"
    return worst


def psnr(a, b, peak=2.0):
    """Peak signal-to-noise ratio in dB for tensors in [-1, 1]."""
    mse = float(((a - b) ** 2).mean())
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)
