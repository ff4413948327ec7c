"""Smoke test for the rowtsm Python extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/rowtsm-*.whl
"""

import math

import rowtsm


def line_mask(anchor, bottom, size=512, stub=60):
    mask = rowtsm.Mask(size, size)
    # vertical stub so the anchor column dominates the top strip
    for y in range(stub):
        mask.set(anchor, y, True)
    steps = size - 1
    for y in range(size):
        x = round(anchor + (bottom - anchor) * y / steps)
        mask.set(x, y, True)
    return mask


def main():
    mask = line_mask(240, 300)
    det = rowtsm.detect(mask)
    assert (det.l_x1, det.l_x2) == (240, 300), det
    assert not det.anchor_fallback
    assert abs(det.delta_theta - math.degrees(math.atan(60 / 512))) < 1e-12

    again = rowtsm.Mask.from_pgm(mask.to_pgm())
    assert again.count_foreground() == mask.count_foreground()

    empty = rowtsm.detect(rowtsm.Mask(512, 512))
    assert empty.anchor_fallback and empty.l_x1 == 277

    cfg = rowtsm.TsmConfig.simulation(512)
    assert (cfg.begin, cfg.cease, cfg.default_anchor) == (128, 384, 256)

    assert rowtsm.epsilon([0.0], [0.0]) == 1.0
    assert abs(rowtsm.epsilon([8.23], [126.74])) < 1e-12

    assert rowtsm.p_control(0.0, 0.0) == 0.0
    omega = rowtsm.ibvs_control(10.0, 2.0, (0.0, -3.0), lambda_=1.5)
    assert abs(omega - 1.5 * 2.0 / 3.0) < 1e-12

    assert rowtsm.suggest_bc([200] * 5 + [300] * 6 + [250]) == (200, 300)

    table = rowtsm.reproduce_table()
    assert len(table) == 44
    cls, eps_b, eps, rep_b, rep = table[0]
    assert cls == "1" and abs(eps - rep) <= 0.1 and abs(eps_b - rep_b) <= 0.1

    corpus = rowtsm.render_corpus(count=3, seed=1)
    assert [c[0] for c in corpus] == ["render_0000.pgm", "render_0001.pgm", "render_0002.pgm"]
    assert corpus[0][1].width == 512

    summary = rowtsm.simulate(trials=2, seed=0)
    assert summary["all_settled"], summary
    assert len(summary["theta_traces"]) == 2
    print(
        "smoke test ok: settling {:.1f} frames, |theta| {:.2f} deg".format(
            summary["mean_settling_frames"], summary["mean_abs_theta_deg"]
        )
    )


if __name__ == "__main__":
    main()
