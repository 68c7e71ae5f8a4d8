import numpy as np
import pytest

from manudate import imgcore as ic


def brute_force_otsu(data: np.ndarray) -> int:
    """Independent oracle: direct between-class variance per threshold."""
    values = data.ravel().astype(float)
    best_t, best_v = None, -1.0
    for t in range(255):
        lo = values[values <= t]
        hi = values[values > t]
        if len(lo) == 0 or len(hi) == 0:
            continue
        w0 = len(lo) / len(values)
        w1 = len(hi) / len(values)
        v = w0 * w1 * (lo.mean() - hi.mean()) ** 2
        if v > best_v:
            best_v, best_t = v, t
    return best_t


class TestOtsu:
    def test_two_level_tie_breaks_low(self):
        img = ic.GrayImage(np.array([[0, 0], [255, 255]], dtype=np.uint8))
        assert ic.otsu_threshold(img) == 0

    def test_three_dark_one_bright(self):
        img = ic.GrayImage(np.array([[10, 10], [10, 200]], dtype=np.uint8))
        assert ic.otsu_threshold(img) == brute_force_otsu(img.data)

    def test_constant_image_raises(self):
        img = ic.GrayImage(np.full((2, 2), 7, dtype=np.uint8))
        with pytest.raises(ic.DegenerateImageError):
            ic.otsu_threshold(img)

    def test_matches_brute_force_on_random_images(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            data = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
            img = ic.GrayImage(data)
            assert ic.otsu_threshold(img) == brute_force_otsu(data)

    def test_matches_brute_force_on_bimodal_images(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            a = rng.integers(0, 100)
            b = rng.integers(150, 256)
            data = np.where(rng.random((12, 12)) < 0.4, a, b).astype(np.uint8)
            assert ic.otsu_threshold(ic.GrayImage(data)) == brute_force_otsu(data)


class TestBinarize:
    def test_polarity_darker(self):
        img = ic.GrayImage(np.array([[0, 0], [255, 255]], dtype=np.uint8))
        assert ic.binarize(img, "ink-darker").mask.ravel().tolist() == [True, True, False, False]

    def test_polarity_lighter(self):
        img = ic.GrayImage(np.array([[0, 0], [255, 255]], dtype=np.uint8))
        assert ic.binarize(img, "ink-lighter").mask.ravel().tolist() == [False, False, True, True]

    def test_constant_page_empty_flag(self):
        img = ic.GrayImage(np.full((8, 8), 236, dtype=np.uint8))
        out = ic.binarize(img, empty_on_constant=True)
        assert not out.mask.any()
        with pytest.raises(ic.DegenerateImageError):
            ic.binarize(img)

    def test_counts_partition_the_image(self):
        rng = np.random.default_rng(3)
        data = rng.integers(0, 256, size=(20, 30), dtype=np.uint8)
        out = ic.binarize(ic.GrayImage(data))
        assert out.ink_count() + (~out.mask).sum() == 20 * 30

    def test_unknown_polarity(self):
        img = ic.GrayImage(np.array([[0, 255]], dtype=np.uint8))
        with pytest.raises(ValueError):
            ic.binarize(img, "sideways")


class TestIO:
    def test_pgm_roundtrip(self, tmp_path):
        data = np.arange(6, dtype=np.uint8).reshape(2, 3)
        p = tmp_path / "img.pgm"
        ic.save_gray(ic.GrayImage(data), p)
        back = ic.load_gray(p)
        assert np.array_equal(back.data, data)

    def test_pgm_identity_bytes(self, tmp_path):
        p = tmp_path / "tiny.pgm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 0, 255]))
        img = ic.load_gray(p)
        assert img.width == 2 and img.height == 2
        assert img.data.ravel().tolist() == [0, 255, 0, 255]

    def test_png_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.integers(0, 256, size=(9, 7), dtype=np.uint8)
        p = tmp_path / "img.png"
        ic.save_gray(ic.GrayImage(data), p)
        assert np.array_equal(ic.load_gray(p).data, data)

    def test_rgb_png_luma(self, tmp_path):
        from PIL import Image

        rgb = np.zeros((1, 2, 3), dtype=np.uint8)
        rgb[0, 0] = (255, 255, 255)
        rgb[0, 1] = (255, 0, 0)
        p = tmp_path / "rgb.png"
        Image.fromarray(rgb, mode="RGB").save(p)
        img = ic.load_gray(p)
        assert img.data[0, 0] == 255
        assert img.data[0, 1] == 76  # round(0.299 * 255)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ic.load_gray(tmp_path / "nope.png")

    def test_unsupported_format(self, tmp_path):
        p = tmp_path / "img.tiff"
        p.write_bytes(b"II*\x00")
        with pytest.raises(ValueError):
            ic.load_gray(p)

    def test_binary_save(self, tmp_path):
        mask = np.array([[True, False]])
        p = tmp_path / "mask.pgm"
        ic.save_binary(ic.BinaryImage(mask), p)
        assert ic.load_gray(p).data.ravel().tolist() == [0, 255]


class TestComponents:
    def test_two_disjoint_squares(self):
        m = np.zeros((8, 8), dtype=bool)
        m[1:3, 1:3] = True
        m[5:7, 5:7] = True
        comps = ic.connected_components(ic.BinaryImage(m))
        assert len(comps) == 2

    def test_diagonal_pair_is_one_component(self):
        m = np.zeros((4, 4), dtype=bool)
        m[1, 1] = m[2, 2] = True
        assert len(ic.connected_components(ic.BinaryImage(m))) == 1

    def test_empty_mask(self):
        assert ic.connected_components(ic.BinaryImage(np.zeros((3, 3), dtype=bool))) == []

    def test_partition_and_scan_order(self):
        rng = np.random.default_rng(11)
        m = rng.random((24, 24)) < 0.3
        comps = ic.connected_components(ic.BinaryImage(m))
        total = np.zeros_like(m, dtype=int)
        firsts = []
        for comp in comps:
            total += comp
            ys, xs = np.nonzero(comp)
            order = np.lexsort((xs, ys))
            firsts.append((ys[order[0]], xs[order[0]]))
        assert np.array_equal(total, m.astype(int))  # every ink pixel exactly once
        assert firsts == sorted(firsts)


class TestContours:
    def test_single_pixel(self):
        m = np.zeros((3, 3), dtype=bool)
        m[1, 1] = True
        (c,) = ic.trace_contours(ic.BinaryImage(m))
        assert c.closed and len(c.points) == 1 and len(c.chain) == 0

    def test_filled_square_boundary(self):
        m = np.zeros((5, 5), dtype=bool)
        m[1:4, 1:4] = True
        (c,) = ic.trace_contours(ic.BinaryImage(m))
        assert len(c.points) == 8
        assert ic._signed_area2(c.points) < 0  # counter-clockwise, y-up frame

    def test_east_step_is_code_one(self):
        assert ic.CHAIN_STEPS[1] == (1, 0)
        assert ic._DELTA_TO_CODE[(1, 0)] == 1

    def test_chain_replay_reproduces_points(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            m = rng.random((20, 26)) < 0.35
            for c in ic.trace_contours(ic.BinaryImage(m)):
                assert np.array_equal(ic.replay_chain(c), c.points)
                steps = np.roll(c.points, -1, axis=0) - c.points
                if len(c.points) > 1:
                    assert np.abs(steps).max() <= 1  # 8-adjacency incl. closure

    def test_hole_orientation_opposes_outer(self):
        m = np.zeros((7, 7), dtype=bool)
        m[1:6, 1:6] = True
        m[2:5, 2:5] = False
        contours = ic.trace_contours(ic.BinaryImage(m))
        outers = [c for c in contours if not c.hole]
        holes = [c for c in contours if c.hole]
        assert len(outers) == 1 and len(holes) == 1
        assert ic._signed_area2(outers[0].points) < 0
        assert ic._signed_area2(holes[0].points) > 0

    def test_holes_can_be_excluded(self):
        m = np.zeros((7, 7), dtype=bool)
        m[1:6, 1:6] = True
        m[3, 3] = False
        assert any(c.hole for c in ic.trace_contours(ic.BinaryImage(m)))
        assert not any(c.hole for c in ic.trace_contours(ic.BinaryImage(m), include_holes=False))

    def test_chain_codes_in_range(self):
        rng = np.random.default_rng(9)
        m = rng.random((15, 15)) < 0.4
        for c in ic.trace_contours(ic.BinaryImage(m)):
            if len(c.chain):
                assert c.chain.min() >= 1 and c.chain.max() <= 8


class TestSkeleton:
    def test_plus_sign_single_x_junction(self):
        m = np.zeros((9, 9), dtype=bool)
        m[4, 1:8] = True
        m[1:8, 4] = True
        sk = ic.skeletonize(ic.BinaryImage(m))
        assert sk.junctions == [(4, 4, 4)]

    def test_straight_line_no_junctions(self):
        m = np.zeros((5, 9), dtype=bool)
        m[2, 1:8] = True
        assert ic.skeletonize(ic.BinaryImage(m)).junctions == []

    def test_l_corner_detected(self):
        m = np.zeros((9, 9), dtype=bool)
        m[2:8, 2] = True
        m[7, 2:8] = True
        sk = ic.skeletonize(ic.BinaryImage(m))
        assert sk.junctions == [(2, 7, 2)]

    def test_t_junction(self):
        m = np.zeros((9, 9), dtype=bool)
        m[2, 1:8] = True
        m[2:8, 4] = True
        junctions = ic.skeletonize(ic.BinaryImage(m)).junctions
        assert len(junctions) == 1 and junctions[0][2] == 3

    def test_skeleton_subset_of_ink(self):
        rng = np.random.default_rng(2)
        m = rng.random((20, 20)) < 0.45
        sk = ic.skeletonize(ic.BinaryImage(m))
        assert not (sk.mask & ~m).any()

    def test_component_count_preserved(self):
        rng = np.random.default_rng(13)
        for _ in range(8):
            m = rng.random((22, 22)) < 0.35
            img = ic.BinaryImage(m)
            sk = ic.skeletonize(img)
            n_ink = len(ic.connected_components(img))
            n_skel = len(ic.connected_components(ic.BinaryImage(sk.mask)))
            assert n_skel == n_ink

    def test_determinism(self):
        rng = np.random.default_rng(4)
        m = rng.random((16, 16)) < 0.4
        a = ic.skeletonize(ic.BinaryImage(m))
        b = ic.skeletonize(ic.BinaryImage(m))
        assert np.array_equal(a.mask, b.mask) and a.junctions == b.junctions
