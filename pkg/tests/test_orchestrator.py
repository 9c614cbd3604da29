import json
import os
from pathlib import Path

import pytest

from evicoevo.backend import ScriptedBackend
from evicoevo.errors import BackendProtocolError, ConfigError, LockError, StateError
from evicoevo.orchestrator import Engine, EngineConfig, IterationState, Phase, all_keys, resume
from evicoevo.orchestrator.engine import load_video_manifest, select_videos
from evicoevo.orchestrator.state import OutputLock, persist
from evicoevo.pseudo_supervision import Dataset
from evicoevo.solver_training import TrainingBatch


def make_config(fixtures_dir: Path, out: Path, **engine) -> EngineConfig:
    config = EngineConfig.load(
        None,
        {
            "video_manifest_path": str(fixtures_dir / "videos.jsonl"),
            "script_path": str(fixtures_dir / "script.jsonl"),
            "output_dir": str(out),
            "seed": "7",
            "units_per_video": "4",
        },
    )
    for key, value in engine.items():
        config.set(key, str(value))
    return config


class TestConfig:
    def test_dump_load_round_trip(self, tmp_path):
        path = tmp_path / "c.ini"
        config = EngineConfig()
        config.set("gate_s_min", "0.25")
        config.set("event_keywords", "kick, throw")
        path.write_text(config.dump())
        back = EngineConfig.load(path)
        assert back.dump() == config.dump()
        assert back.heuristics.event_keywords == ("kick", "throw")

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[engine]\nseed = 3\n")
        assert EngineConfig.load(path, {"seed": "9"}).engine.seed == 9

    @pytest.mark.parametrize("text", ["[engine]\nbogus = 1\n", "[weird]\nx = 1\n", "[engine]\nseed = abc\n"])
    def test_rejects(self, tmp_path, text):
        path = tmp_path / "c.ini"
        path.write_text(text)
        with pytest.raises(ConfigError):
            EngineConfig.load(path)

    def test_validate(self):
        config = EngineConfig()
        config.set("script_path", "x")
        config.validate()
        config.set("gate_s_min", "0.9")
        with pytest.raises(ConfigError):
            config.validate()

    def test_keys_unique(self):
        names = [k for _, k in all_keys()]
        assert len(names) == len(set(names))


class TestState:
    def test_round_trip(self, tmp_path):
        state = IterationState(2, Phase.SOLVER_SCORE, 7, "q-ckpt", None, "d.jsonl")
        persist(state, tmp_path)
        assert resume(tmp_path) == state

    def test_missing(self, tmp_path):
        assert resume(tmp_path) is None

    def test_corrupted(self, tmp_path):
        (tmp_path / "state.json").write_text("{not json")
        with pytest.raises(StateError, match="corrupted"):
            resume(tmp_path)

    def test_phase_order(self):
        assert [p.value for p in Phase] == [
            "questioner-opt", "data-gen", "pseudo-label", "solver-score", "batch-emit", "done",
        ]
        assert Phase.BATCH_EMIT.next is Phase.DONE

    def test_lock_contention(self, tmp_path):
        with OutputLock(tmp_path):
            with pytest.raises(LockError):
                OutputLock(tmp_path).acquire()
        assert not (tmp_path / ".lock").exists()

    def test_stale_lock_reclaimed(self, tmp_path):
        (tmp_path / ".lock").write_text("999999999")
        with OutputLock(tmp_path) as lock:
            assert lock.held
            assert (tmp_path / ".lock").read_text() == str(os.getpid())

    def test_engine_refuses_locked_dir(self, fixtures_dir, tmp_path):
        with OutputLock(tmp_path):
            with pytest.raises(LockError):
                Engine(make_config(fixtures_dir, tmp_path)).run(1)


class TestManifest:
    def test_skips_bad_rows(self, tmp_path, caplog):
        path = tmp_path / "v.jsonl"
        path.write_text(
            '{"id": "a", "uri": "x", "duration_s": 10}\n{"id": "b", "uri": "y", "duration_s": 0}\n'
            '{"id": "c"}\nnot json\n\n'
        )
        assert [v.video_id for v in load_video_manifest(path)] == ["a"]
        assert caplog.text.count("skipping") == 3

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            load_video_manifest(tmp_path / "missing.jsonl")

    def test_seeded_shuffle(self, fixtures_dir):
        videos = load_video_manifest(fixtures_dir / "videos.jsonl")
        a = select_videos(videos, 3, 7, 1)
        assert a == select_videos(videos, 3, 7, 1)
        assert sorted(v.video_id for v in a) == sorted(v.video_id for v in videos)
        assert select_videos(videos, 2, 7, 1) == a[:2]

    def test_600_rows_all_used(self, tmp_path):
        path = tmp_path / "v.jsonl"
        path.write_text("".join(json.dumps({"id": f"v{i}", "uri": "", "duration_s": 5}) + "\n" for i in range(600)))
        videos = load_video_manifest(path)
        chosen = select_videos(videos, 600, 1, 1)
        assert len(chosen) == 600 and set(chosen) == set(videos) and chosen != videos


class TestEngine:
    def test_zero_iterations_writes_nothing(self, fixtures_dir, tmp_path):
        out = tmp_path / "run"
        state = Engine(make_config(fixtures_dir, out)).run(0)
        assert state == IterationState(rng_seed=7)
        assert not out.exists()

    def test_single_iteration(self, fixtures_dir, tmp_path):
        state = Engine(make_config(fixtures_dir, tmp_path)).run(1)
        assert (state.iteration, state.phase) == (1, Phase.DONE)
        dataset = Dataset.from_jsonl((tmp_path / "data" / "D_001.jsonl").read_text())
        report = json.loads((tmp_path / "reports" / "pseudo_001.json").read_text())
        assert report["generated"] == 12
        assert report["generated"] == report["retained"] + report["dropped"]
        assert len(dataset.records) == report["retained"] > 0
        for r in dataset.records:
            assert 0.3 <= r.pseudo.support <= 0.8
        batch = TrainingBatch.from_jsonl((tmp_path / "batches" / "solver_001.jsonl").read_text())
        assert batch.manifest.group_size == 5 and batch.manifest.role == "solver"
        assert {r.unit_id for r in batch.records} <= {r.unit.unit_id for r in dataset.records}
        qbatch = TrainingBatch.from_jsonl((tmp_path / "batches" / "questioner_001.jsonl").read_text())
        assert qbatch.manifest.group_size == 4 and qbatch.manifest.records == 3
        assert not (tmp_path / ".lock").exists()

    def test_already_complete_is_noop(self, fixtures_dir, tmp_path):
        engine = Engine(make_config(fixtures_dir, tmp_path))
        engine.run(1)
        before = (tmp_path / "state.json").stat().st_mtime_ns
        assert engine.run(1).iteration == 1
        assert (tmp_path / "state.json").stat().st_mtime_ns == before

    def test_stop_after_each_phase(self, fixtures_dir, tmp_path):
        config = make_config(fixtures_dir, tmp_path)
        for phase in [Phase.QUESTIONER_OPT, Phase.DATA_GEN, Phase.PSEUDO_LABEL, Phase.SOLVER_SCORE]:
            state = Engine(config, stop_after=phase).run(1)
            assert state.phase is phase.next and state.iteration == 0
        assert not (tmp_path / "batches" / "solver_001.jsonl").exists()
        state = Engine(config, stop_after=Phase.BATCH_EMIT).run(1)
        assert state.phase is Phase.DONE and state.iteration == 1

    def test_failure_keeps_state_at_failed_phase(self, fixtures_dir, tmp_path):
        config = make_config(fixtures_dir, tmp_path)
        script = [json.loads(line) for line in (fixtures_dir / "script.jsonl").read_text().splitlines()]
        questioner_only = ScriptedBackend.from_records(r for r in script if r["fingerprint"] == "role:questioner")
        with pytest.raises(BackendProtocolError):
            Engine(config, backend=questioner_only).run(1)
        assert resume(tmp_path) == IterationState(0, Phase.QUESTIONER_OPT, 7)
        assert not (tmp_path / ".lock").exists()
        assert Engine(config).run(1).iteration == 1

    def test_handback_updates_refs(self, fixtures_dir, tmp_path):
        config = make_config(fixtures_dir, tmp_path)
        (tmp_path / "handback_001.json").write_text(json.dumps({"questioner": "q-ckpt-1", "solver": "s-ckpt-1"}))
        state = Engine(config).run(1)
        assert state.questioner_ref == "q-ckpt-1" and state.solver_ref == "s-ckpt-1"

    def test_frozen_without_handback(self, fixtures_dir, tmp_path):
        state = Engine(make_config(fixtures_dir, tmp_path)).run(2)
        assert state.questioner_ref is None and state.solver_ref is None
        assert (tmp_path / "data" / "D_002.jsonl").exists()

    def test_fresh_pseudo_rollouts(self, fixtures_dir, tmp_path):
        Engine(make_config(fixtures_dir, tmp_path, fresh_pseudo_rollouts="true")).run(1)
        assert (tmp_path / "data" / "D_001.jsonl").exists()
