//! Matplotlib script rendering the standard figures from a run directory.

/// Renders the script; `b_pinv` maps the logged `σ̂` to the matched channels.
pub fn script(b_pinv: &[Vec<f64>]) -> String {
    let rows = serde_json::to_string(b_pinv).unwrap_or_else(|_| "[]".into());
    SCRIPT.replace("__B_PINV__", &rows)
}

const SCRIPT: &str = r#"#!/usr/bin/env python3
"""Figures for one run directory: tracking, constraints, nominal error,
adaptive input and uncertainty estimate. Usage: python3 plot.py [dir]"""
import csv
import json
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))
B_PINV = __B_PINV__
VARIANTS = [v for v in ("uc", "vanilla", "tube") if os.path.exists(os.path.join(HERE, v + ".csv"))]


def load(variant):
    with open(os.path.join(HERE, variant + ".csv")) as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    return {name: [float(r[i]) for r in body] for i, name in enumerate(head)}


def columns(data, prefix):
    keys = sorted((k for k in data if k.startswith(prefix) and k[len(prefix):].isdigit()), key=lambda k: int(k[len(prefix):]))
    return [data[k] for k in keys]


def bounds():
    path = os.path.join(HERE, "tightening.json")
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        return json.load(fh)


def stack(n, height):
    fig, axes = plt.subplots(n, 1, sharex=True, figsize=(8, height), squeeze=False)
    return fig, list(axes[:, 0])


def save(fig, name):
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, name), dpi=150)
    plt.close(fig)


logs = {v: load(v) for v in VARIANTS}
design = bounds()

first = next(iter(logs.values()), None)
fig, axes = stack(len(columns(first, "y")) if first else 1, 6)
for i, ax in enumerate(axes):
    for v, d in logs.items():
        ax.plot(d["t"], columns(d, "y")[i], label=v)
    if first:
        ax.plot(first["t"], columns(first, "r")[i], "k--", label="reference")
    ax.set_ylabel("y%d" % (i + 1))
    ax.legend()
axes[-1].set_xlabel("t [s]")
save(fig, "tracking.png")

fig, axes = stack(1 + (len(columns(first, "u")) if first else 0), 8)
for v, d in logs.items():
    axes[0].plot(d["t"], columns(d, "x")[-1], label=v)
    for j, ax in enumerate(axes[1:]):
        inputs = columns(d, "u")
        if j < len(inputs):
            ax.plot(d["t"], inputs[j], label=v)
axes[0].set_ylabel("x%d" % len(columns(first, "x")) if first else "x")
for j, ax in enumerate(axes[1:]):
    ax.set_ylabel("u%d" % (j + 1))
axes[-1].set_xlabel("t [s]")
axes[0].legend()
save(fig, "constraints.png")

if "uc" in logs:
    d = logs["uc"]
    xs, xn = columns(d, "x"), columns(d, "xn")
    fig, axes = stack(len(xs), 8)
    for i, ax in enumerate(axes):
        ax.plot(d["t"], [a - b for a, b in zip(xs[i], xn[i])])
        if design:
            ax.axhline(design["rho_tilde"][i], color="r", ls=":")
            ax.axhline(-design["rho_tilde"][i], color="r", ls=":")
        ax.set_ylabel("x%d - xn%d" % (i + 1, i + 1))
    axes[-1].set_xlabel("t [s]")
    save(fig, "x_minus_xn.png")

    ua = columns(d, "ua")
    fig, axes = stack(len(ua), 5)
    for j, ax in enumerate(axes):
        ax.plot(d["t"], ua[j])
        if design:
            ax.axhline(design["rho_ua"][j], color="r", ls=":")
            ax.axhline(-design["rho_ua"][j], color="r", ls=":")
        ax.set_ylabel("u_a%d" % (j + 1))
    axes[-1].set_xlabel("t [s]")
    save(fig, "adaptive_input.png")

    sigma, f = columns(d, "sigma"), columns(d, "f")
    est = [[sum(b * s[k] for b, s in zip(row, sigma)) for k in range(len(d["t"]))] for row in B_PINV]
    fig, axes = stack(len(f), 5)
    for j, ax in enumerate(axes):
        ax.plot(d["t"], f[j], label="f")
        ax.plot(d["t"], est[j], "--", label="estimate")
        ax.legend()
    axes[-1].set_xlabel("t [s]")
    save(fig, "estimation.png")
"#;
