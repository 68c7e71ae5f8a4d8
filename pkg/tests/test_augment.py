import numpy as np
import pytest

from manudate import augment as ag
from manudate import imgcore as ic
from manudate.manifest import ManifestEntry
from manudate.synth import SyntheticSpec, render_page


def checker(w=20, h=14):
    data = np.indices((h, w)).sum(axis=0) % 2 * 180 + 30
    return ic.GrayImage(data.astype(np.uint8))


class TestMorphParams:
    def test_defaults(self):
        p = ag.MorphParams()
        assert p.smoothing_radius == 8 and p.displacement == 1.0 and p.copies == 3

    @pytest.mark.parametrize("kwargs", [
        {"smoothing_radius": 0},
        {"displacement": -0.1},
        {"copies": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ag.MorphParams(**kwargs)


class TestField:
    def test_zero_displacement_zero_field(self):
        f = ag.make_field(12, 9, ag.MorphParams(displacement=0.0, seed=1))
        assert not f.dx.any() and not f.dy.any()

    def test_same_seed_same_field(self):
        p = ag.MorphParams(seed=77)
        f1 = ag.make_field(30, 20, p)
        f2 = ag.make_field(30, 20, p)
        assert np.array_equal(f1.dx, f2.dx) and np.array_equal(f1.dy, f2.dy)

    def test_max_magnitude_equals_displacement(self):
        for disp in (1.0, 2.5):
            f = ag.make_field(40, 30, ag.MorphParams(displacement=disp, seed=5))
            mag = np.hypot(f.dx, f.dy)
            assert abs(mag.max() - disp) <= 1e-9

    def test_component_bound(self):
        f = ag.make_field(25, 25, ag.MorphParams(seed=9))
        assert max(np.abs(f.dx).max(), np.abs(f.dy).max()) <= 1.0 + 1e-12


class TestMorph:
    def test_identity_at_zero(self):
        img = checker()
        out = ag.morph(img, ag.MorphParams(displacement=0.0, seed=3))
        assert np.array_equal(out.data, img.data)

    def test_constant_image_unchanged(self):
        img = ic.GrayImage(np.full((10, 16), 120, dtype=np.uint8))
        out = ag.morph(img, ag.MorphParams(seed=3))
        assert np.array_equal(out.data, img.data)

    def test_determinism(self):
        img = checker()
        a = ag.morph(img, ag.MorphParams(seed=21))
        b = ag.morph(img, ag.MorphParams(seed=21))
        assert np.array_equal(a.data, b.data)

    def test_dimensions_preserved(self):
        img = checker(31, 17)
        out = ag.morph(img, ag.MorphParams(seed=2))
        assert out.width == 31 and out.height == 17

    def test_ink_area_stable_on_synthetic_page(self):
        spec = SyntheticSpec(n_classes=2, samples_per_class=1)
        page = render_page(spec, 0, 0, sample_seed=99)
        ink0 = ic.binarize(page)
        comps0 = len(ic.connected_components(ink0))
        ratios = []
        comp_drift = []
        for seed in range(20):
            warped = ag.morph(page, ag.MorphParams(seed=seed))
            ink1 = ic.binarize(warped)
            ratios.append(ag.ink_area_ratio(ink0, ink1))
            comp_drift.append(abs(len(ic.connected_components(ink1)) - comps0) / comps0)
        ratios = np.asarray(ratios)
        assert (np.abs(ratios - 1.0) <= 0.10).all()
        assert (np.asarray(comp_drift) <= 0.20).all()


class TestBatch:
    def _entries(self, tmp_path, n=4):
        entries = []
        for i in range(n):
            img = checker(24, 18)
            path = tmp_path / f"s{i}.png"
            ic.save_gray(img, path)
            entries.append(ManifestEntry(id=f"s{i}", path=str(path), label_year=1300 + i))
        return entries

    def test_counting_and_provenance(self, tmp_path):
        entries = self._entries(tmp_path, 4)
        merged = ag.augment_batch(entries, ag.MorphParams(seed=1, copies=3))
        assert len(merged) == 16
        variants = [e for e in merged if e.is_augmented]
        assert len(variants) == 12
        ids = {e.id for e in entries}
        assert all(v.source_id in ids for v in variants)
        assert all(v.label_year == next(e for e in entries if e.id == v.source_id).label_year
                   for v in variants)

    def test_eaa_style_counts(self, tmp_path):
        entries = self._entries(tmp_path, 23)
        merged = ag.augment_batch(entries, ag.MorphParams(seed=0, copies=15),
                                  write_images=False)
        assert len(merged) == 368

    def test_copies_zero_rejected(self):
        with pytest.raises(ValueError):
            ag.MorphParams(copies=0)

    def test_derived_seeds_stable_under_extension(self, tmp_path):
        entries = self._entries(tmp_path, 3)
        merged_small = ag.augment_batch(entries[:2], ag.MorphParams(seed=4, copies=2),
                                        write_images=False)
        merged_full = ag.augment_batch(entries, ag.MorphParams(seed=4, copies=2),
                                       write_images=False)
        small = {e.id: e.seed for e in merged_small if e.is_augmented}
        full = {e.id: e.seed for e in merged_full if e.is_augmented}
        assert all(full[k] == v for k, v in small.items())

    def test_refuses_double_augmentation(self, tmp_path):
        entries = self._entries(tmp_path, 1)
        merged = ag.augment_batch(entries, ag.MorphParams(seed=1, copies=1))
        with pytest.raises(ValueError):
            ag.augment_batch(merged, ag.MorphParams(seed=1, copies=1))

    def test_written_images_deterministic(self, tmp_path):
        entries = self._entries(tmp_path, 2)
        ag.augment_batch(entries, ag.MorphParams(seed=8, copies=1))
        first = (tmp_path / "s0.morph0.png").read_bytes()
        ag.augment_batch(entries, ag.MorphParams(seed=8, copies=1))
        assert (tmp_path / "s0.morph0.png").read_bytes() == first
