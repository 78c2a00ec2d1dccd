"""Quick end-to-end check of the tweezer Python module.

Build and install first:
    pip install --no-build-isolation -e crates/python
"""

import math
import tempfile

import tweezer


def main() -> None:
    cfg = tweezer.Config("train.period_ns = 200\n")
    assert cfg["train.period_ns"] == "200.0"
    cfg["run.trajectories"] = 50
    cfg.validate()
    assert len(cfg.digest()) == 64
    assert tweezer.Config(cfg.to_text()).digest() == cfg.digest()

    try:
        cfg["chain.total_efficiency"] = "lots"
    except ValueError as e:
        assert "chain.total_efficiency" in str(e)
    else:
        raise AssertionError("bad value accepted")

    t = 4e-9
    assert abs(tweezer.excitation_probability(math.pi / t, t) - 1.0) < 1e-12
    rabi = tweezer.first_fluorescence_maximum(t, 200e-9)
    trace = tweezer.obe_trace(rabi, t, free_decay=100e-9)
    print(f"first maximum at {rabi * t / math.pi:.4f} pi, peak rho_ee = {max(p for _, p in trace):.4f}")

    stats = tweezer.photon_statistics(rabi, t, 200e-9, pulses=1000, trajectories=20, seed=1)
    oracle = tweezer.mean_photons_per_period(rabi, t, 200e-9)
    mean, se = stats["mean"]
    assert abs(mean - oracle) < 4 * se, (mean, oracle, se)
    print(f"photons per pulse {mean:.4f} +- {se:.4f} (master equation {oracle:.4f}), P(>=2) = {stats['p2_or_more'][0]:.4f}")

    with tempfile.TemporaryDirectory() as out:
        cfg["run.output_directory"] = out
        flop = tweezer.run_raman_flop(cfg)
        print(f"Raman Rabi frequency {flop['rabi_frequency_khz']:.3f} kHz")
        scan = tweezer.run_raman_scan(cfg)
        centres = sorted(v[0] for k, v in scan.metrics().items() if k.endswith("_center_mhz"))
        print("Raman lines (MHz):", ", ".join(f"{c:.3f}" for c in centres))
        hbt = tweezer.run_hbt(cfg)
        print(hbt.to_text().strip().splitlines()[1])
        print(f"zero-delay ratio {hbt['zero_delay_residual_ratio']:.3f}, {len(hbt.artifact_paths)} files written")

    print("smoke test passed")


if __name__ == "__main__":
    main()
