import numpy as np
import pytest

import config
from instance_io import JointLabel, OrientedBox
from skeleton_renderer import SkeletonRenderer


@pytest.fixture
def renderer(spec):
    return SkeletonRenderer(spec)


class TestSkeletonRenderer:

    def test_canvas_matches_image(self, renderer, spec, rng, make_instance):
        inst = make_instance(spec, rng, (2,) * 6)
        canvas = renderer.blank_canvas(inst)
        assert canvas.shape == (320, 320, 3)
        assert canvas.dtype == np.uint8
        assert not canvas.any()

    def test_draw_box_uses_color(self, renderer):
        canvas = np.zeros((100, 100, 3), dtype=np.uint8)
        renderer.draw_box(canvas, OrientedBox(50.0, 50.0, 0.0, 60.0), 1.0 / 3.0, (0, 0, 255))
        assert canvas[..., 2].any()
        assert not canvas[..., 0].any()

    def test_render_prediction(self, renderer, spec, rng, make_instance):
        inst = make_instance(spec, rng, (2,) * 6)
        image = renderer.render(inst, JointLabel((1,) * 6, (0, 1, 2, 3, 0)))
        assert (image == np.array(config.SKELETON_COLOR, dtype=np.uint8)).all(axis=-1).any()
        assert (image == np.array(config.TRUTH_COLOR, dtype=np.uint8)).all(axis=-1).any()

    def test_render_without_truth(self, renderer, spec, rng, make_instance, monkeypatch):
        monkeypatch.setattr(config, "SHOW_CANDIDATES", False)
        inst = make_instance(spec, rng, (2,) * 6)
        image = renderer.render(inst, show_truth=False)
        assert not image.any()

    def test_save(self, renderer, spec, rng, make_instance, tmp_path):
        inst = make_instance(spec, rng, (1,) * 6)
        path = tmp_path / "inst.png"
        renderer.save(renderer.render(inst), path)
        assert path.stat().st_size > 0
        with pytest.raises(OSError):
            renderer.save(renderer.render(inst), tmp_path / "no-existe" / "inst.png")
