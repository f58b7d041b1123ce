import pytest

from aeloc import parse_config, run_experiment


def build_dataset(out_dir, *, specimen=None, prototypes=None, tests=None,
                  test_kind="continuous-noise", seed=1):
    """Synthesize a small dataset; shorter records than the defaults keep tests fast."""
    raw = {
        "specimen": {"record_length": 8192, **(specimen or {})},
        "prototype_positions_mm": (
            prototypes if prototypes is not None else [900.0 + 400.0 * k for k in range(6)]
        ),
        "test_positions_mm": tests if tests is not None else [],
        "test_source_kind": test_kind,
        "seed": seed,
    }
    cfg = parse_config(raw)
    run_experiment(cfg, out_dir)
    return cfg


@pytest.fixture(scope="session")
def noiseless_dataset(tmp_path_factory):
    """Default dispersive geometry without noise: 12 prototypes plus a few probe tests.

    Test sites: 900 (terminal prototype), 1000 and 2000 (midpoints),
    1700 (interior prototype), 3100 (terminal prototype).
    """
    out = tmp_path_factory.mktemp("noiseless")
    cfg = build_dataset(
        out,
        specimen={"noise_snr_db": None},
        prototypes=[900.0 + 200.0 * k for k in range(12)],
        tests=[900.0, 1000.0, 1700.0, 2000.0, 3100.0],
    )
    return out, cfg
