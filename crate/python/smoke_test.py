"""Smoke test for the pyicosnet extension module.

Build and install first:
    pip install -e crates/python --no-build-isolation
"""

import math
import os
import sys
import tempfile

import pyicosnet as ico

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        sys.exit(1)


def main():
    v, e, f = ico.level_stats(3)
    check((v, e, f) == (642, 1920, 1280), "level-3 closed-form counts")

    mesh = ico.Mesh(3)
    check(mesh.n_vertices == 642 and len(mesh.faces()) == 1280, "mesh construction")
    check(mesh.vertices()[0] == (0.0, 0.0, 1.0), "vertex 0 is the north pole")

    ops = ico.Operators(4)
    z = [p[2] for p in ico.Mesh(4).vertices()]
    lz = ops.apply("laplacian", z)
    num = sum(a * b for a, b in zip(z, lz))
    den = sum(a * a for a in z)
    check(abs(num / den + 2.0) < 0.02, "laplacian of z is close to -2 z")
    check(all(abs(x) < 1e-9 for x in ops.apply("grad_x", [1.0] * len(z))), "gradient of a constant vanishes")

    model = ico.Model("mnist")
    check(model.param_count() == 61658, "MNIST classifier has 61658 parameters")
    check(ico.Model("climate").param_count() == 328339, "climate segmenter has 328339 parameters")

    small = ico.Model("mnist", level=2, seed=1)
    y = small.forward([[[0.1] * 162]] * 2)
    check(len(y) == 2 and len(y[0]) == 10 and len(y[0][0]) == 1, "forward output shape")
    check(all(math.isfinite(t) for t in y[0][0] + y[1][0]), "forward output finite")

    digits = ico.Dataset.mnist(os.path.join(ROOT, "data", "mnist-subset"), "test", level=2, limit=32)
    check(len(digits) == 32 and digits.channels == 1, "digit dataset loads")
    rows = small.train(digits, digits, epochs=2, batch=8, seed=3)
    check(len(rows) == 2 and rows[-1][4] is not None, "two training epochs with validation")
    acc, miou, _ = small.evaluate(digits)
    check(0.0 <= acc <= 1.0 and 0.0 <= miou <= 1.0, "evaluation metrics in range")

    seg = ico.Dataset.synthetic(2, 3, 6, seed=0)
    features, labels = seg.sample(0)
    check(len(features) == 4 and len(labels) == 162, "synthetic segmentation sample")
    segmenter = ico.Model("2d3ds", level=2, width=0.125, in_channels=4, classes=3, init="operator-gain")
    check("init=operator-gain" in segmenter.spec(), "operator-gain init recorded in the spec")
    with tempfile.TemporaryDirectory() as d:
        segmenter.train(seg, epochs=1, batch=3, checkpoint_dir=d)
        restored = ico.Model.load(os.path.join(d, "latest.ckpt"))
        check(restored.evaluate(seg) == segmenter.evaluate(seg), "checkpoint restores the model")

    img = ico.render_equirect(z[:642], 3, width=32, height=16)
    check(len(img) == 16 and len(img[0]) == 32 and img[0][0] > 0.9, "equirectangular render")

    results = ico.gradcheck()
    check(all(r[3] for r in results), f"gradient checks pass ({len(results)} checks)")

    try:
        ico.Mesh(12)
        check(False, "level guard")
    except ValueError:
        check(True, "level guard raises ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
