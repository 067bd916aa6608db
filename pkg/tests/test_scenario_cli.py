import json
import os
from pathlib import Path

import numpy as np
import pytest

from fingersim.cli import main
from fingersim.errors import ConfigurationError
from fingersim.scenario import IndenterSpec, Keyframe, Scenario, parse_scenario, serialize_scenario
from fingersim.simloop import run_scenario
from fingersim.streamproto import MSG_AUDIO, MSG_VIDEO, decode_audio_payload, read_episode

EXAMPLE = Path(__file__).parent.parent / "src" / "fingersim" / "data" / "example_scenario.cfg"


class TestScenarioParsing:
    def test_example_parses_and_roundtrips(self, tmp_path):
        scn = parse_scenario(EXAMPLE)
        assert scn.duration_s == 2.0
        assert scn.seed == 7
        assert len(scn.timeline) == 6
        out = tmp_path / "copy.cfg"
        serialize_scenario(scn, out)
        back = parse_scenario(out)
        assert back.duration_s == scn.duration_s
        assert back.seed == scn.seed
        assert back.elastomer == scn.elastomer
        assert back.timeline == scn.timeline
        assert back.indenter_spec == scn.indenter_spec

    def test_duplicate_key_names_key_and_line(self, tmp_path):
        cfg = tmp_path / "dup.cfg"
        cfg.write_text("[scenario]\nduration = 1.0\nduration = 2.0\n")
        with pytest.raises(ConfigurationError) as err:
            parse_scenario(cfg)
        assert "duration" in str(err.value)
        assert "line" in str(err.value)

    def test_timeline_out_of_order_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(
            "[scenario]\nduration = 1.0\n[timeline]\n"
            "k0 = 0.5, 50, 12.5, 0, 0, 0, 0, 1\n"
            "k1 = 0.2, 50, 12.5, 0, 0, 0, 0, 1\n"
        )
        with pytest.raises(ConfigurationError, match="strictly increasing"):
            parse_scenario(cfg)

    def test_unknown_key_rejected_with_location(self, tmp_path):
        cfg = tmp_path / "unk.cfg"
        cfg.write_text("[scenario]\nduration = 1.0\nwarp_speed = 9\n")
        with pytest.raises(ConfigurationError, match="warp_speed"):
            parse_scenario(cfg)

    def test_interpolation_linear(self):
        scn = parse_scenario(EXAMPLE)
        a, b = scn.timeline[0], scn.timeline[1]
        mid = scn.interpolate((a.t + b.t) / 2)
        assert mid.force == pytest.approx((a.force + b.force) / 2)
        assert mid.z == pytest.approx((a.z + b.z) / 2)

    def test_interpolation_clamps_at_ends(self):
        scn = parse_scenario(EXAMPLE)
        assert scn.interpolate(99.0).force == scn.timeline[-1].force
        assert scn.interpolate(-1.0).force == scn.timeline[0].force

    def test_all_indenter_primitives_build(self, tmp_path):
        from fingersim.core import RgbImage
        from fingersim.photorender import write_ppm

        sphere = IndenterSpec(kind="sphere", radius=4.0).build(tmp_path)
        assert sphere.shape.values.min() == 0.0
        flat = IndenterSpec(kind="flat", size=(12.0, 6.0)).build(tmp_path)
        assert not flat.shape.values.any()
        edge = IndenterSpec(kind="edge", length=10.0, wedge_angle_deg=30.0).build(tmp_path)
        # V profile: deepest along the ridge centerline, rising to the sides.
        mid = edge.shape.values.shape[0] // 2
        assert edge.shape.values[mid, 0] < edge.shape.values[0, 0]
        rng = np.random.default_rng(0)
        write_ppm(RgbImage(rng.uniform(0, 1, (16, 20, 3))), tmp_path / "tex.ppm")
        textured = IndenterSpec(kind="textured", texture_file="tex.ppm", depth_scale=0.5).build(tmp_path)
        assert textured.shape.values.min() == 0.0
        assert textured.shape.values.max() <= 0.5
        with pytest.raises(ConfigurationError):
            IndenterSpec(kind="antiprism").build(tmp_path)


@pytest.fixture(scope="module")
def short_scenario():
    scn = parse_scenario(EXAMPLE)
    scn.duration_s = 1.0
    return scn


class TestRunScenario:
    def test_frame_count_matches_rate(self, short_scenario, tmp_path):
        path = tmp_path / "ep.bin"
        report = run_scenario(short_scenario, record_path=path, start_wallclock_us=0)
        assert report.frames_rendered == 30
        assert report.chunks_emitted == 50
        with read_episode(path) as reader:
            assert reader.count(MSG_VIDEO) == 30
            assert reader.count(MSG_AUDIO) == 50

    def test_determinism_bit_identical(self, short_scenario, tmp_path):
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        run_scenario(short_scenario, record_path=p1, start_wallclock_us=1234)
        run_scenario(short_scenario, record_path=p2, start_wallclock_us=1234)
        assert p1.read_bytes() == p2.read_bytes()

    def test_wallclock_is_only_difference(self, short_scenario, tmp_path):
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        run_scenario(short_scenario, record_path=p1, start_wallclock_us=111)
        run_scenario(short_scenario, record_path=p2, start_wallclock_us=222)
        with read_episode(p1) as r1, read_episode(p2) as r2:
            h1, h2 = dict(r1.header), dict(r2.header)
            assert h1.pop("start_wallclock_us") != h2.pop("start_wallclock_us")
            assert h1 == h2
            for m1, m2 in zip(r1.iter_arrival(), r2.iter_arrival()):
                assert m1 == m2

    def test_default_scenario_runs_at_real_time(self):
        # The shipped guarantee targets a commodity 4-core machine; scale
        # the floor by the core deficit on smaller CI boxes.
        scn = parse_scenario(EXAMPLE)
        scn.duration_s = 1.0
        report = run_scenario(scn)
        floor = 1.0 if (os.cpu_count() or 1) >= 4 else 0.5
        assert report.real_time_factor >= floor, (
            f"real-time factor {report.real_time_factor:.2f} below {floor} "
            f"on {os.cpu_count()} cores"
        )

    def test_zero_force_gives_baseline_frames_and_silence(self, tmp_path):
        scn = Scenario(
            duration_s=0.5,
            seed=3,
            timeline=(Keyframe(t=0.0, z=2.0, force=0.0),),
        )
        path = tmp_path / "quiet.bin"
        report = run_scenario(scn, record_path=path, start_wallclock_us=0)
        assert report.impacts == 0
        assert report.slip_events == 0
        with read_episode(path) as reader:
            videos = [reader.get(MSG_VIDEO, k) for k in range(reader.count(MSG_VIDEO))]
            assert len({m.payload for m in videos}) == 1  # identical baseline frames
            for k in range(reader.count(MSG_AUDIO)):
                pcm = decode_audio_payload(reader.get(MSG_AUDIO, k).payload)
                assert not pcm.any()


class TestCli:
    def test_optics_report_runs(self, capsys):
        assert main(["optics-report", "--config", "default", "--density", "1.0"]) == 0
        out = capsys.readouterr().out
        assert "coverage" in out
        assert "mean_incidence_rad" in out

    def test_simulate_and_inspect(self, tmp_path, capsys):
        scn_path = tmp_path / "scn.cfg"
        scn = parse_scenario(EXAMPLE)
        scn.duration_s = 0.5
        from fingersim.scenario import serialize_scenario

        serialize_scenario(scn, scn_path)
        ep = tmp_path / "ep.bin"
        assert main(["simulate", "--scenario", str(scn_path), "--record", str(ep)]) == 0
        out = capsys.readouterr().out
        assert "frames rendered:    15" in out
        assert main(["inspect", str(ep)]) == 0
        out = capsys.readouterr().out
        assert "video" in out
        assert "max A/V drift" in out
        assert "seq gaps: 0" in out

    def test_wear_cli(self, tmp_path, capsys):
        out_file = tmp_path / "wear.txt"
        assert main(["wear", "--profile", "mini-gelA", "--seeds", "5", "--out", str(out_file)]) == 0
        text = out_file.read_text()
        assert "PASS" in text
        assert "mean lifetime" in text

    def test_eval_cli(self, tmp_path, capsys):
        runs = tmp_path / "runs.jsonl"
        records = [
            {"task": "serve_egg", "completed": 6, "success": True},
            {"task": "serve_egg", "completed": 3, "success": False},
            {"task": "serve_egg", "completed": 6, "success": True},
        ]
        runs.write_text("\n".join(json.dumps(r) for r in records) + "\n")
        assert main(["eval", "--runs", str(runs), "--task", "serve_egg:6"]) == 0
        out = capsys.readouterr().out
        assert "83%" in out  # progress (6+3+6)/18
        assert "67%" in out  # success 2/3

    def test_missing_scenario_exits_config_code(self, capsys):
        assert main(["simulate", "--scenario", "/nonexistent.cfg"]) == 2

    def test_bad_scenario_exits_config_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[scenario]\nduration = -2\n")
        assert main(["simulate", "--scenario", str(bad)]) == 2

    def test_unknown_profile_exits_runtime_code(self, capsys):
        assert main(["wear", "--profile", "unobtainium", "--seeds", "2"]) == 3
