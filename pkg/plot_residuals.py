import sys

import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns


def plot_residuals(path="residual_sweep.csv", filename="residual_report.png"):
    print(f"📊 Reading residual sweep from '{path}'...")

    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        print(f"❌ Error: File '{path}' not found.")
        return None

    needed = {"family", "point", "r", "h", "residual"}
    if df.empty or not needed.issubset(df.columns):
        print("⚠️ Warning: No residual rows found in file.")
        return None

    df = df[df["residual"] > 0].copy()
    df["series"] = df["family"] + " r=" + df["r"].astype(str) + " @ " + df["point"].astype(str)

    sns.set_theme(style="whitegrid")
    fig, ax = plt.subplots(figsize=(10, 7))
    fig.suptitle("Leaf divergence identity: residual vs step", fontsize=16, fontweight="bold")

    sns.lineplot(data=df, x="h", y="residual", hue="series", marker="o", ax=ax)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("Stencil step h")
    ax.set_ylabel("|lhs - rhs|")

    # h^2 guide through the smallest step of the first series
    first = df[df["series"] == df["series"].iloc[0]].sort_values("h")
    h0, e0 = first["h"].iloc[0], first["residual"].iloc[0]
    ax.plot(first["h"], e0 * (first["h"] / h0) ** 2, color="black", linestyle="--", label="O(h²)")
    ax.legend()

    plt.tight_layout()
    plt.savefig(filename)
    plt.close(fig)
    print(f"✅ Chart saved successfully: '{filename}'")
    return filename


if __name__ == "__main__":
    plot_residuals(*sys.argv[1:3])
