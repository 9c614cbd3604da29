"""The co-evolution loop: Questioner scoring, data generation, pseudo labels, Solver scoring, batch emission.

Iteration ``k = state.iteration + 1`` writes, in phase order:

    batches/questioner_{k}.jsonl   questioner-opt
    work/candidates_{k}.jsonl      data-gen
    data/D_{k}.jsonl               pseudo-label (+ reports/pseudo_{k}.json)
    work/solver_rollouts_{k}.jsonl solver-score
    batches/solver_{k}.jsonl       batch-emit (+ reports/iteration_{k}.json)

Every file is written atomically when its phase completes, and the state is
persisted after each phase, so a resumed run repeats at most the phase that
was interrupted.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

from ..backend import Backend, PromptRequest, RolloutCache, build_questioner_prompt, build_solver_prompt, make_backend
from ..errors import ConfigError, NoValidRolloutsError
from ..protocol import FormatVerdict, SupervisionUnit, parse_questioner_output, parse_solver_output
from ..pseudo_supervision import Candidate, Dataset, build_dataset
from ..questioner_rewards import (
    QuestionerScore,
    evidence_quality,
    learnability,
    questioner_reward,
    video_dependency,
)
from ..solver_training import BatchRecord, ScoredRollout, TrainingBatch, TrainingBatchManifest, emit_training_batch, solver_reward
from ..timeline import VideoContext
from .config import EngineConfig
from .state import IterationState, OutputLock, Phase, persist, resume, write_atomic

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def derive_seed(base: int, *parts: object) -> int:
    """Sub-seed for one purpose; a pure function of the run seed so resumes replay exactly."""
    blob = json.dumps([base, *[str(p) for p in parts]])
    return int(hashlib.sha256(blob.encode("utf-8")).hexdigest()[:8], 16)


def load_video_manifest(path: str | Path) -> list[VideoContext]:
    """Read ``{"id", "uri", "duration_s"}`` rows; rows without a usable duration are skipped."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read video manifest {path}: {exc}") from exc
    videos = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            videos.append(VideoContext.from_dict(row))
        except (ValueError, KeyError, TypeError) as exc:
            logger.warning("%s:%d: skipping video row (%s)", path, lineno, exc)
    return videos


def select_videos(videos: Sequence[VideoContext], count: int, seed: int, iteration: int) -> list[VideoContext]:
    chosen = list(videos)
    random.Random(derive_seed(seed, "shuffle", iteration)).shuffle(chosen)
    return chosen[:count]


class Paths:
    def __init__(self, output_dir: str | Path, k: int) -> None:
        root = Path(output_dir)
        tag = f"{k:03d}"
        self.questioner_batch = root / "batches" / f"questioner_{tag}.jsonl"
        self.candidates = root / "work" / f"candidates_{tag}.jsonl"
        self.dataset = root / "data" / f"D_{tag}.jsonl"
        self.pseudo_report = root / "reports" / f"pseudo_{tag}.json"
        self.solver_rollouts = root / "work" / f"solver_rollouts_{tag}.jsonl"
        self.solver_batch = root / "batches" / f"solver_{tag}.jsonl"
        self.iteration_report = root / "reports" / f"iteration_{tag}.json"
        self.handback = root / f"handback_{tag}.json"


class Engine:
    """Runs co-evolution iterations against one output directory.

    ``stop_after`` halts (with state persisted) once the named phase
    completes, which is how the single-phase CLI commands are built.
    """

    def __init__(
        self,
        config: EngineConfig,
        backend: Backend | None = None,
        stop_after: Phase | None = None,
    ) -> None:
        self.config = config
        self._backend = backend
        self.stop_after = Phase(stop_after) if stop_after is not None else None
        self.cache = RolloutCache()
        self._cache_iteration: int | None = None
        self._videos: list[VideoContext] | None = None
        self.stopped = False

    @property
    def output_dir(self) -> Path:
        return Path(self.config.engine.output_dir)

    @property
    def backend(self) -> Backend:
        if self._backend is None:
            self._backend = make_backend(self.config.backend)
        return self._backend

    # ----------------------------------------------------------- driving

    def initial_state(self) -> IterationState:
        return resume(self.output_dir) or IterationState(rng_seed=self.config.engine.seed)

    def run(self, iterations: int | None = None) -> IterationState:
        """Advance until ``iterations`` rounds are complete (resuming any persisted state)."""
        target = self.config.engine.iterations if iterations is None else iterations
        state = self.initial_state()
        if state.iteration >= target:
            return state
        with OutputLock(self.output_dir):
            while state.iteration < target:
                state = self.run_iteration(state)
                if self.stopped:
                    break
        return state

    def run_iteration(self, state: IterationState) -> IterationState:
        """Execute the remaining phases of the current iteration, persisting after each."""
        if state.phase is Phase.DONE:
            state.phase = Phase.QUESTIONER_OPT
        persist(state, self.output_dir)
        handlers: dict[Phase, Callable[[IterationState], None]] = {
            Phase.QUESTIONER_OPT: self.phase_questioner_opt,
            Phase.DATA_GEN: self.phase_data_gen,
            Phase.PSEUDO_LABEL: self.phase_pseudo_label,
            Phase.SOLVER_SCORE: self.phase_solver_score,
            Phase.BATCH_EMIT: self.phase_batch_emit,
        }
        self.stopped = False
        while state.phase is not Phase.DONE:
            phase = state.phase
            logger.info("iteration %d: %s", state.iteration + 1, phase.value)
            handlers[phase](state)
            state.phase = phase.next
            if state.phase is Phase.DONE:
                state.iteration += 1
            persist(state, self.output_dir)
            if self.stop_after is phase:
                self.stopped = True
                break
        return state

    # ----------------------------------------------------------- helpers

    def _k(self, state: IterationState) -> int:
        return state.iteration + 1

    def _paths(self, state: IterationState) -> Paths:
        return Paths(self.output_dir, self._k(state))

    def _map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        items = list(items)
        workers = max(1, min(self.config.backend.max_parallel, len(items) or 1))
        if workers == 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    def _complete(self, request: PromptRequest, state: IterationState) -> list[str]:
        k = self._k(state)
        if self._cache_iteration != k:
            self.cache.clear()
            self._cache_iteration = k
        return self.cache.complete(self.backend, request)

    def videos(self, state: IterationState) -> list[VideoContext]:
        if self._videos is None:
            self._videos = load_video_manifest(self.config.engine.video_manifest_path)
            if not self._videos:
                raise ConfigError(f"video manifest {self.config.engine.video_manifest_path} has no usable videos")
        return select_videos(self._videos, self.config.engine.videos_per_iter, state.rng_seed, self._k(state))

    def _solver_request(
        self, unit: SupervisionUnit, with_video: bool, samples: int, purpose: str, state: IterationState
    ) -> PromptRequest:
        e = self.config.engine
        request = build_solver_prompt(
            unit,
            with_video,
            sample_count=samples,
            temperature=self.config.backend.temperature,
            seed=derive_seed(state.rng_seed, self._k(state), purpose, unit.unit_id),
            fps=e.fps,
            max_frames=e.max_frames,
        )
        if state.solver_ref:
            request = _with_model(request, state.solver_ref)
        return request

    def _questioner_request(self, video: VideoContext, samples: int, purpose: str, state: IterationState) -> PromptRequest:
        e = self.config.engine
        request = build_questioner_prompt(
            video,
            sample_count=samples,
            temperature=self.config.backend.temperature,
            seed=derive_seed(state.rng_seed, self._k(state), purpose, video.video_id),
            fps=e.fps,
            max_frames=e.max_frames,
        )
        if state.questioner_ref:
            request = _with_model(request, state.questioner_ref)
        return request

    def score_unit(self, unit: SupervisionUnit | None, verdict: FormatVerdict, state: IterationState) -> QuestionerScore:
        """Questioner reward for one sample using fresh-or-cached Solver rollouts."""
        h = self.config.heuristics
        if not verdict.ok or unit is None:
            return questioner_reward(verdict, None, None, None, h)
        m = self.config.engine.m_rollouts
        with_texts = self._complete(self._solver_request(unit, True, m, "solver-with", state), state)
        without_texts = self._complete(self._solver_request(unit, False, m, "solver-without", state), state)
        with_answers = [parse_solver_output(t, unit.video).answer for t in with_texts]
        without_answers = [parse_solver_output(t, unit.video).answer for t in without_texts]
        try:
            learn = learnability(with_answers)
            dep = video_dependency(with_answers, without_answers, unit.answer)
        except NoValidRolloutsError:
            learn = dep = None
        return questioner_reward(verdict, learn, dep, evidence_quality(unit, h), h)

    def _apply_handback(self, state: IterationState, role: str) -> None:
        path = self._paths(state).handback
        if not path.exists():
            return
        try:
            refs = json.loads(path.read_text(encoding="utf-8"))
        except ValueError:
            logger.warning("ignoring unreadable hand-back file %s", path)
            return
        ref = refs.get(role)
        if isinstance(ref, str) and ref:
            logger.info("%s checkpoint updated to %s", role, ref)
            setattr(state, f"{role}_ref", ref)

    # ------------------------------------------------------------ phases

    def phase_questioner_opt(self, state: IterationState) -> None:
        e = self.config.engine
        k = self._k(state)

        def group_for(video: VideoContext) -> BatchRecord:
            request = self._questioner_request(video, e.questioner_group_size, "questioner-opt", state)
            texts = self._complete(request, state)
            rollouts = []
            for j, text in enumerate(texts):
                unit, verdict = parse_questioner_output(text, video, unit_id=f"{video.video_id}/q{k:03d}-opt-{j}")
                score = self.score_unit(unit, verdict, state)
                rollouts.append(ScoredRollout(text, score.r_q_total))
            return BatchRecord(f"{video.video_id}/q{k:03d}", request.body, video.uri, rollouts)

        records = self._map(group_for, self.videos(state))
        manifest = self._manifest(k, "questioner", e.questioner_group_size)
        batch = emit_training_batch(records, manifest, e.eps)
        write_atomic(self._paths(state).questioner_batch, batch.to_jsonl())

    def phase_data_gen(self, state: IterationState) -> None:
        self._apply_handback(state, "questioner")
        e = self.config.engine
        k = self._k(state)

        def generate(video: VideoContext) -> list[dict]:
            request = self._questioner_request(video, e.units_per_video, "data-gen", state)
            rows = []
            for j, text in enumerate(self._complete(request, state)):
                unit_id = f"{video.video_id}/d{k:03d}-{j}"
                _, verdict = parse_questioner_output(text, video, unit_id=unit_id)
                rows.append({"candidate_id": unit_id, "video": video.to_dict(), "raw_text": text, "verdict": verdict.to_dict()})
            return rows

        rows = [row for group in self._map(generate, self.videos(state)) for row in group]
        text = "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows)
        write_atomic(self._paths(state).candidates, text)

    def phase_pseudo_label(self, state: IterationState) -> None:
        e = self.config.engine
        paths = self._paths(state)
        rows = _read_jsonl(paths.candidates)
        pl_purpose = "solver-pseudo" if e.fresh_pseudo_rollouts else "solver-with"

        def candidate_for(row: dict) -> Candidate:
            video = VideoContext.from_dict(row["video"])
            unit, verdict = parse_questioner_output(row["raw_text"], video, unit_id=row["candidate_id"])
            if unit is None:
                return Candidate(row["candidate_id"], video, verdict)
            # the larger request fills the cache first so the other can reuse its prefix
            n_request = self._solver_request(unit, True, e.n_pseudo, pl_purpose, state)
            if pl_purpose == "solver-with" and e.m_rollouts > e.n_pseudo:
                self._complete(self._solver_request(unit, True, e.m_rollouts, pl_purpose, state), state)
            texts = self._complete(n_request, state)
            rollouts = [parse_solver_output(t, video) for t in texts]
            return Candidate(row["candidate_id"], video, verdict, unit, rollouts, self.score_unit(unit, verdict, state))

        candidates = self._map(candidate_for, rows)
        dataset = build_dataset(candidates, self._k(state), self.config.gate, e.n_pseudo)
        write_atomic(paths.dataset, dataset.to_jsonl())
        write_atomic(paths.pseudo_report, json.dumps(dataset.report.to_dict(), indent=2, sort_keys=True) + "\n")
        state.dataset_path = str(paths.dataset)

    def phase_solver_score(self, state: IterationState) -> None:
        e = self.config.engine
        paths = self._paths(state)
        dataset = Dataset.from_jsonl(paths.dataset.read_text(encoding="utf-8"))

        def score(record) -> BatchRecord:
            unit = record.unit
            request = self._solver_request(unit, True, e.solver_group_size, "solver-grpo", state)
            rollouts = []
            for text in self._complete(request, state):
                pred = parse_solver_output(text, unit.video)
                reward = solver_reward(pred, record.pseudo, unit.video.duration_s, e.alpha).r_s
                rollouts.append(ScoredRollout(text, reward))
            return BatchRecord(unit.unit_id, request.body, unit.video.uri, rollouts)

        records = self._map(score, dataset.records)
        text = "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records)
        write_atomic(paths.solver_rollouts, text)

    def phase_batch_emit(self, state: IterationState) -> None:
        e = self.config.engine
        k = self._k(state)
        paths = self._paths(state)
        records = [BatchRecord.from_dict(row) for row in _read_jsonl(paths.solver_rollouts)]
        batch = emit_training_batch(records, self._manifest(k, "solver", e.solver_group_size), e.eps)
        write_atomic(paths.solver_batch, batch.to_jsonl())

        questioner = TrainingBatch.from_jsonl(paths.questioner_batch.read_text(encoding="utf-8"))
        pseudo = json.loads(paths.pseudo_report.read_text(encoding="utf-8"))
        report = {
            "iteration": k,
            "questioner": {"groups": questioner.manifest.records},
            "dataset": pseudo,
            "solver": {"records": batch.manifest.records, "skipped": batch.skipped},
        }
        write_atomic(paths.iteration_report, json.dumps(report, indent=2, sort_keys=True) + "\n")
        self._apply_handback(state, "solver")

    def _manifest(self, k: int, role: str, group_size: int) -> TrainingBatchManifest:
        e = self.config.engine
        return TrainingBatchManifest(
            iteration=k,
            role=role,
            group_size=group_size,
            learning_rate=e.learning_rate,
            kl_coefficient=e.kl_coefficient,
        )


def _with_model(request: PromptRequest, model: str) -> PromptRequest:
    return replace(request, model=model)


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
