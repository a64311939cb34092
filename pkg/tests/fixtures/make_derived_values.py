"""Regenerate derived_values.json with 30-digit arithmetic (mpmath), independent of the library."""
import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 30


def f(x):
    return float(x)


def soft(y, beta, K):
    w = [mp.e ** (-beta * abs(k - y)) for k in range(1, K + 1)]
    s = sum(w)
    return [x / s for x in w]


def main():
    third = mp.mpf(1) / 3
    vals = {
        "softmax_0_ln2_ln3": [f(mp.mpf(1) / 6), f(mp.mpf(2) / 6), f(mp.mpf(3) / 6)],
        "cdf_02_05_03": [0.2, 0.7, 1.0],
        "perturbed_k2_eps01_K3": [0.05, 0.9, 0.05],
        "perturbed_k1_eps05_K5": [0.5, 0.125, 0.125, 0.125, 0.125],
        "ce_K3_y2": f(-mp.log(mp.mpf("0.5"))),
        "ce_K3_y1_uniform": f(-mp.log(third)),
        "oll_K5_y3_a1_uniform": f(6 * -mp.log(mp.mpf("0.8"))),
        "oll_K3_y1_a2": f(1 * -mp.log(mp.mpf("0.9")) + 4 * -mp.log(mp.mpf("0.9"))),
        "soft_labels_K3_y2_b1": [f(x) for x in soft(2, 1, 3)],
        "soft_labels_K3_y1_b1": [f(x) for x in soft(1, 1, 3)],
        "soft_loss_K3_y2_b1_uniform": f(-sum(p * mp.log(third) for p in soft(2, 1, 3))),
        "emd_K3_y1_onehot2": 1.0,
        "emd_K3_y1_onehot3": 2.0,
        "wkl_K2_perfect": -1.0,
        "mll_K3_y2_l05_a1": f(mp.mpf("0.5") * -mp.log(mp.mpf("0.5"))
                              + mp.mpf("0.5") * (-mp.log(mp.mpf("0.8")) - mp.log(mp.mpf("0.7")))),
        "binomial_K5_f05": [f(mp.binomial(4, j) * mp.mpf("0.5") ** 4) for j in range(5)],
        "f1_1122_vs_1212": 0.5,
        "f1_all_one_class": f(mp.mpf(1) / 3),
        "mae_133_vs_125": 1.0,
        "mse_133_vs_125": f(mp.mpf(5) / 3),
        "mae_pair_1_5": 4.0,
        "mse_pair_1_5": 16.0,
        "ob1_133_vs_125": f(mp.mpf(2) / 3),
        "mean_f1_04_06": 0.5,
        "std_f1_04_06": 0.1,
    }
    out = Path(__file__).with_name("derived_values.json")
    out.write_text(json.dumps(vals, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
