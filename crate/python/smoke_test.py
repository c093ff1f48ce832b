"""Smoke test for the pyweakmeas extension.

Build and copy the module next to this file first:

    cargo build -p weakmeas-python --features extension-module
    cp target/debug/libpyweakmeas.so python/pyweakmeas.so
"""

import cmath
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import pyweakmeas as wm


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def test_weak_value_and_pseudo_state():
    phi = math.pi / 3
    rho, sel, obs = wm.anomaly_setup(phi)
    assert close(wm.postselection_rate(rho, sel), math.cos(phi) ** 2)
    h = 1 / math.sqrt(2)
    initial = [cmath.rect(h, phi / 2), cmath.rect(h, -phi / 2)]
    final = [cmath.rect(h, -phi / 2), cmath.rect(h, phi / 2)]
    w = wm.weak_value(initial, final, obs)
    assert close(w.real, 2.0) and close(w.imag, 0.0)
    ps = wm.pseudo_state(rho, sel)
    assert close((ps[0][0] + ps[1][1]).real, 1.0)


def test_errors_become_value_error():
    try:
        wm.run_anomaly_experiment(2.0, 10.0, 100)
    except ValueError as e:
        assert "phi" in str(e)
    else:
        raise AssertionError("expected ValueError")
    try:
        wm.DensityOperator([[1, 0], [0, 1]])
    except ValueError:
        pass
    else:
        raise AssertionError("trace-2 matrix accepted")


def test_anomaly_experiment_is_seeded():
    a = wm.run_anomaly_experiment(math.pi / 3, 10.0, 3600, seed=1)
    b = wm.run_anomaly_experiment(math.pi / 3, 10.0, 3600, seed=1)
    assert a.mean == b.mean and a.accepted_count == b.accepted_count
    assert 810 <= a.accepted_count <= 990
    assert close(a.predicted_mean, 2.0, 1e-9)


def test_decoherence():
    rho = wm.DensityOperator.pure([1 / math.sqrt(2), 1 / math.sqrt(2)])
    z = wm.Observable.pauli_z()
    out = wm.decoherence_evolve(rho, z, 1.0, 2.0).matrix()
    assert close(out[0][1].real, 0.5 * math.exp(-1.0))
    assert close(out[0][0].real, 0.5)


def test_trajectories():
    rho = wm.DensityOperator.pure([math.cos(0.6), math.sin(0.6)])
    z = wm.Observable.pauli_z()
    tr = wm.quantum_trajectory(rho, z, 1.0, record_every=100, seed=3)
    assert len(tr.times) == 11 and len(tr.states) == 11 and tr.alpha[0] == 0.0
    assert tr.min_raw_purity > 1 - 1e-9
    again = wm.quantum_trajectory(rho, z, 1.0, record_every=100, seed=3)
    assert tr.states[-1] == again.states[-1]
    coin = wm.ClassicalState([1, 1])
    ct = wm.classical_trajectory(coin, [1.0, -1.0], 0.5, dt=0.01, record_every=10, seed=4)
    assert all(close(sum(w), 1.0, 1e-12) for w in ct.states)


def test_collapse_statistics():
    rho = wm.DensityOperator.pure([math.cos(math.pi / 3), math.sin(math.pi / 3)])
    h = wm.collapse_statistics(rho, wm.Observable.pauli_z(), 200, t_final=40.0, dt=0.01, seed=5)
    assert h.converged == h.total == 200
    assert sorted(h.eigenvalues) == [-1.0, 1.0]
    assert abs(sum(h.frequencies) - 1.0) < 1e-12


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for t in tests:
        t()
        print(f"ok   {t.__name__}")
    print(f"{len(tests)} passed")
