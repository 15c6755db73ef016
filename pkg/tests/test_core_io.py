import os

import numpy as np
import pytest

from keyposes.core import MotionSequence, RngState, as_pose, pose_distance
from keyposes.io import SequenceFormatError, load_sequence, save_sequence
from keyposes.synth import SynthSpec, family_template, synth_dataset


def random_sequence(rng, action="walk"):
    T = int(rng.integers(2, 30))
    J = int(rng.integers(1, 6))
    scale = 10.0 ** rng.uniform(-3, 4)
    return MotionSequence(rng.normal(0, scale, (T, J, 3)), float(rng.choice([25.0, 50.0, 29.97])), action)


class TestMotionSequence:
    def test_shape_properties(self):
        seq = MotionSequence(np.zeros((4, 2, 3)))
        assert (seq.T, seq.J, len(seq)) == (4, 2, 4)
        assert seq.frame_rate_hz == 25.0

    def test_immutable(self):
        seq = MotionSequence(np.zeros((3, 1, 3)))
        with pytest.raises(ValueError):
            seq.frames[0, 0, 0] = 1.0

    @pytest.mark.parametrize("bad", [np.zeros((3, 2)), np.full((2, 1, 3), np.nan), np.zeros((0, 1, 3))])
    def test_rejects_bad_frames(self, bad):
        with pytest.raises(ValueError):
            MotionSequence(bad)

    def test_seconds_to_frames(self):
        seq = MotionSequence(np.zeros((2, 1, 3)))
        assert seq.seconds_to_frames(1) == 25
        assert seq.seconds_to_frames(5) == 125

    def test_pose_helpers(self):
        assert as_pose([0, 0, 0, 3, 4, 0]).shape == (2, 3)
        assert pose_distance([[0, 0, 0], [0, 0, 0]], [[3, 4, 0], [0, 0, 0]]) == 2.5


class TestRngState:
    def test_same_stream_same_draws(self):
        a = RngState(7).child("train", 3).generator().random(5)
        b = RngState(7).child("train", 3).generator().random(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RngState(7).child("a").generator().random(5)
        b = RngState(7).child("b").generator().random(5)
        assert not np.array_equal(a, b)


class TestLoadSave:
    def test_two_row_csv(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("frame,j0_x,j0_y,j0_z\n1,0,0,0\n2,1,0,0\n")
        seq = load_sequence(path)
        assert (seq.T, seq.J) == (2, 1)
        np.testing.assert_array_equal(seq.frames[:, 0, 0], [0.0, 1.0])

    def test_inconsistent_column_count(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("frame,j0_x,j0_y,j0_z,j1_x,j1_y,j1_z\n1,0,0,0,0,0,0\n2,1,2,3,4\n")
        with pytest.raises(SequenceFormatError, match="row 2: inconsistent column count"):
            load_sequence(path)

    def test_malformed_number_reports_row(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("frame,j0_x,j0_y,j0_z\n1,0,0,0\n2,0,abc,0\n")
        with pytest.raises(SequenceFormatError, match="row 2"):
            load_sequence(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("")
        with pytest.raises(SequenceFormatError, match="empty"):
            load_sequence(path)

    def test_jsonl_inconsistent_joints(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text('{"frame": 1, "joints": [[0,0,0],[1,1,1]]}\n{"frame": 2, "joints": [[0,0,0]]}\n')
        with pytest.raises(SequenceFormatError, match="inconsistent column count"):
            load_sequence(path)

    @pytest.mark.parametrize("fmt", ["csv", "jsonl"])
    def test_round_trip_random(self, tmp_path, fmt):
        rng = np.random.default_rng(3)
        for i in range(100):
            seq = random_sequence(rng, action=None if i % 3 == 0 else f"a{i}")
            path = tmp_path / f"seq{i}.{fmt}"
            save_sequence(seq, path)
            assert load_sequence(path) == seq

    def test_creates_file_in_empty_dir(self, tmp_path):
        path = tmp_path / "out.csv"
        save_sequence(MotionSequence(np.ones((2, 1, 3))), path)
        assert path.exists()

    def test_sidecar_metadata(self, tmp_path):
        path = tmp_path / "s.csv"
        save_sequence(MotionSequence(np.ones((2, 1, 3)), 50.0, "jump"), path)
        assert (tmp_path / "s.meta").read_text().splitlines() == ["action=jump", "fps=50.0"]

    @pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
    def test_read_only_dir_leaves_nothing(self, tmp_path):
        ro = tmp_path / "ro"
        ro.mkdir()
        ro.chmod(0o500)
        try:
            with pytest.raises(OSError):
                save_sequence(MotionSequence(np.ones((2, 1, 3))), ro / "s.csv")
            assert list(ro.iterdir()) == []
        finally:
            ro.chmod(0o700)

    def test_failed_write_leaves_no_partial_file(self, tmp_path, monkeypatch):
        import keyposes.io as kio

        def boom(fh, seq):
            fh.write("frame,j0_x")
            raise OSError("disk full")

        monkeypatch.setattr(kio, "_write_csv", boom)
        with pytest.raises(OSError, match="disk full"):
            save_sequence(MotionSequence(np.ones((2, 1, 3))), tmp_path / "s.csv")
        assert list(tmp_path.iterdir()) == []


class TestSynth:
    def test_deterministic_without_noise(self):
        spec = SynthSpec(n_actions=3, seqs_per_action=2, T=50, J=2, noise_std_mm=0.0)
        a = synth_dataset(spec, RngState(5).generator())
        b = synth_dataset(spec, RngState(5).generator())
        assert a == b

    def test_deterministic_with_noise(self):
        spec = SynthSpec(T=40, J=3, noise_std_mm=5.0)
        assert synth_dataset(spec, 11) == synth_dataset(spec, 11)

    def test_minimum_length(self):
        seqs = synth_dataset(SynthSpec(n_actions=1, seqs_per_action=2, T=2, J=1), 0)
        assert all(s.T == 2 for s in seqs)

    def test_action_tags(self):
        seqs = synth_dataset(SynthSpec(n_actions=2, seqs_per_action=3, T=10, J=1), 0)
        assert [s.action for s in seqs] == ["action0"] * 3 + ["action1"] * 3

    def test_family_means_differ(self):
        spec = SynthSpec(n_actions=2, seqs_per_action=1, T=100, J=4, noise_std_mm=3.0)
        _, families = synth_dataset(spec, 9, return_params=True)
        # analytic means straight from the generator parameters
        t = np.arange(spec.T)[:, None, None]
        means = []
        for p in families:
            ramp = np.where(t < p.breakpoint, p.slope_before * t,
                            p.slope_before * p.breakpoint + p.slope_after * (t - p.breakpoint))
            means.append(p.base + p.amplitude * np.sin(2 * np.pi * p.freq_hz * t / spec.fps + p.phase) + ramp)
        np.testing.assert_allclose(means[0], family_template(families[0], spec.T), atol=1e-9)
        gap = np.abs(means[0] - means[1]).max()
        assert gap > 10 * spec.noise_std_mm

    def test_nearest_family_mean_classifies_noiseless(self):
        spec = SynthSpec(n_actions=4, seqs_per_action=3, T=60, J=2, noise_std_mm=0.0)
        seqs, families = synth_dataset(spec, 21, return_params=True)
        means = [family_template(p, spec.T) for p in families]
        for s in seqs:
            guess = int(np.argmin([np.linalg.norm(s.frames - m) for m in means]))
            assert s.action == f"action{guess}"

    def test_rejects_bad_spec(self):
        with pytest.raises(ValueError):
            SynthSpec(n_actions=0)
        with pytest.raises(ValueError):
            SynthSpec(T=1)
