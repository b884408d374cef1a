#!/usr/bin/env python3
"""Plot CSV output of `vecrad compare` and `vecrad scaling-study`.

    python3 scripts/plot.py compare.csv -o compare.png
    python3 scripts/plot.py scaling.csv --x T -o scaling.png

The file kind is detected from its header. Requires pandas and matplotlib.
"""

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def plot_compare(df, ax):
    df = df[pd.to_numeric(df["value"], errors="coerce").notna()].copy()
    df["value"] = df["value"].astype(float)
    df["stderr"] = pd.to_numeric(df["stderr"], errors="coerce").fillna(0.0)
    colors = ["tab:red" if s in ("violated", "below_lower_bound", "above_upper_bound") else "tab:blue"
              for s in df["status"]]
    ax.bar(df["quantity"], df["value"], yerr=3 * df["stderr"], color=colors, capsize=4)
    ax.set_ylabel("value (error bars: 3 stderr)")
    first = df.iloc[0]
    ax.set_title(f"{first['class']}  {first['alpha']}  T={first['T']}  n_or_N={first['n_or_N']}")
    ax.tick_params(axis="x", rotation=30)


def plot_scaling(df, ax, x):
    df = df.copy()
    df["value"] = pd.to_numeric(df["value"], errors="coerce")
    df["stderr"] = pd.to_numeric(df["stderr"], errors="coerce").fillna(0.0)
    if x not in df.columns:
        sys.exit(f"column {x!r} not in CSV; choose one of T, n, N, K, d")
    for (quantity, alpha), g in df.groupby(["quantity", "alpha"]):
        if quantity == "theta_ratio" or quantity.endswith("_simplified"):
            continue
        g = g.sort_values(x)
        ax.errorbar(g[x], g["value"], yerr=3 * g["stderr"], marker="o", label=f"{quantity} ({alpha})")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel("value")
    ax.legend(fontsize="small", loc="upper left")
    ratio = df[df["quantity"] == "theta_ratio"]
    if not ratio.empty:
        ax2 = ax.inset_axes([0.62, 0.08, 0.35, 0.3])
        r = ratio.sort_values(x)
        ax2.plot(r[x], pd.to_numeric(r["ratio_to_sqrtT"]), marker="s", color="black")
        ax2.axhline(1.0, ls="--", color="grey")
        ax2.set_title("R_mc / (R_mt sqrt T)", fontsize="small")
        ax2.set_xscale("log", base=2)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("csv")
    ap.add_argument("-o", "--out", default="plot.png")
    ap.add_argument("--x", default="T", help="x axis for scaling studies (T, n, N, K or d)")
    args = ap.parse_args()

    df = pd.read_csv(args.csv, dtype=str, keep_default_na=False)
    for col in ("T", "n", "N", "K", "d"):
        if col in df.columns:
            df[col] = pd.to_numeric(df[col], errors="coerce")
    fig, ax = plt.subplots(figsize=(8, 5))
    if "ratio_to_sqrtT" in df.columns:
        plot_scaling(df, ax, args.x)
    elif "n_or_N" in df.columns:
        plot_compare(df, ax)
    else:
        sys.exit("unrecognized CSV header")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(args.out)


if __name__ == "__main__":
    main()
