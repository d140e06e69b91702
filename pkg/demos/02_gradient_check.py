"""Check hand-written backpropagation through time against finite differences."""

import time

import numpy as np

from cabxde.bilstm import BiLstmNetwork, TrainConfig, gradient_check


def main():
    rng = np.random.default_rng(0)
    X = rng.random((3, 6, 5))  # batch of 3 windows, 6 steps, 5 features
    y = rng.random(3)

    for gate in (True, False):
        cfg = TrainConfig(units=4, time_step=6, epochs=1, patience=1, dropout=0.0, attention_gate=gate)
        net = BiLstmNetwork(5, cfg)
        start = time.perf_counter()
        err = gradient_check(net, X, y)
        label = "attention gate" if gate else "forget gate"
        print(f"{label:>15}: {net.num_parameters()} params, max rel err {err:.2e}, {time.perf_counter() - start:.1f} s")

    # The attention gate reads only the previous cell state, so the
    # input-to-forget weights disappear from every cell
    full = BiLstmNetwork(5, TrainConfig(attention_gate=False)).num_parameters()
    gated = BiLstmNetwork(5, TrainConfig(attention_gate=True)).num_parameters()
    print(f"default size: {full} -> {gated} parameters")


if __name__ == "__main__":
    main()
