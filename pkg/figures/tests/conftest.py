import numpy as np
import pytest


def pattern_cut_csv(path, with_ideal=False, peak_deg=-30.0):
    """Small phi-cut CSV following the exporter's column contract."""
    theta = np.arange(-90.0, 90.5, 1.0)
    f = 1e3 * np.exp(-0.5 * ((theta - peak_deg) / 4.0) ** 2) + 1e-3
    db = 10 * np.log10(f / f.max())
    header = "theta_deg,phi_deg,u,v,f_abs,f_db"
    cols = [theta, np.zeros_like(theta), np.sin(np.radians(theta)),
            np.zeros_like(theta), f, db]
    if with_ideal:
        header += ",f_abs_ideal,f_db_ideal"
        fi = 1e3 * np.exp(-0.5 * ((theta - peak_deg) / 3.0) ** 2) + 1e-4
        cols += [fi, 10 * np.log10(fi / fi.max())]
    lines = [header]
    for row in zip(*cols):
        lines.append(",".join(format(x, ".10g") for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def phase_maps_csv(path, P=6, Q=5):
    rng = np.random.default_rng(0)
    lines = ["p,q,x_m,y_m,ideal_deg,realized_deg,residual_deg,state"]
    for p in range(1, P + 1):
        for q in range(1, Q + 1):
            ideal = rng.uniform(-180, 180)
            state = rng.integers(0, 2)
            realized = 0.0 if state == 1 else 145.0
            lines.append(f"{p},{q},{p * 0.01},{q * 0.01},{ideal:.6f},"
                         f"{realized:.6f},{ideal - realized:.6f},{state}")
    path.write_text("\n".join(lines) + "\n")
    return path


def uv_map_csv(path, n=21):
    axis = np.linspace(-1.0, 1.0, n)
    lines = ["theta_deg,phi_deg,u,v,f_abs,f_db"]
    peak = 1.0
    for v in axis:
        for u in axis:
            if u * u + v * v > 1.0:
                continue
            f = np.exp(-20 * ((u + 0.5) ** 2 + v ** 2)) + 1e-6
            peak = max(peak, f)
            theta = np.degrees(np.arcsin(min(np.hypot(u, v), 1.0)))
            phi = np.degrees(np.arctan2(v, u))
            lines.append(",".join(format(x, ".10g") for x in
                                  (theta, phi, u, v, f,
                                   10 * np.log10(f))))
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def cut_csv(tmp_path):
    return pattern_cut_csv(tmp_path / "cut.csv", with_ideal=True)


@pytest.fixture
def sweep_csvs(tmp_path):
    return [pattern_cut_csv(tmp_path / f"pattern_{i}.csv", peak_deg=-10.0 * i)
            for i in (1, 2, 3)]


@pytest.fixture
def maps_csv(tmp_path):
    return phase_maps_csv(tmp_path / "phase_maps.csv")


@pytest.fixture
def uv_csv(tmp_path):
    return uv_map_csv(tmp_path / "uv.csv")
