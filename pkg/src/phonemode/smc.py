"""Three-stage speech mode classification.

Stage 1 trains sentence-level perceptrons on the pitch contour (PC) and the
epoch strength contour (ESC).  Stage 2 fuses the stage-1 scores into a
source model (Src) and trains a frame-level vocal-tract model (VT) on
MFCC+d+dd with majority voting.  Stage 3 fuses Src and VT.  Fusion weights
come from a 0.01-step grid search on the dev split; with no dev split the
universal weights (0.45/0.55 and 0.35/0.65) apply.

Class encoding is fixed repo-wide: class 0 = conversation, class 1 = read.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .audio_io import Waveform, chop_fixed, remove_silence
from .errors import LengthError
from .excitation import (
    Contour,
    epoch_strength_contour,
    extract_epochs,
    pitch_contour,
    zff,
)
from .neural import MlpModel, TrainConfig, classify_sentence_majority, forward, train_sgd
from .spectral import FeatureMatrix, FrameGrid, mfcc_with_deltas

log = logging.getLogger(__name__)

MODE_CLASSES = ("conversation", "read")
MODE_TO_CLASS = {m: i for i, m in enumerate(MODE_CLASSES)}
UNIVERSAL_STAGE2 = (0.45, 0.55)  # (PC, ESC)
UNIVERSAL_STAGE3 = (0.35, 0.65)  # (Src, VT)
PITCH_INPUT_SCALE = 500.0  # upper pitch bound; maps contour values into [0, 1]


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray
    source_model: str

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        if scores.ndim != 1 or len(scores) < 2:
            raise ValueError("a score vector needs at least two classes")
        if abs(float(scores.sum()) - 1.0) > 1e-6 or np.any(scores < -1e-12):
            raise ValueError("scores must be non-negative and sum to 1")

    @property
    def decision(self) -> int:
        return int(np.argmax(self.scores))


@dataclass(frozen=True)
class FusionWeights:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "w", w)
        if np.any(w < 0.0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("fusion weights must be non-negative and sum to 1")

    def __len__(self) -> int:
        return int(self.w.size)


@dataclass
class FeatureScaler:
    """Per-column standardization fit on training data."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "FeatureScaler":
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        std[std < 1e-12] = 1.0
        return cls(mean, std)

    def apply(self, data: np.ndarray) -> np.ndarray:
        return (data - self.mean) / self.std


@dataclass
class SmcSystem:
    pc_model: MlpModel   # 500 -> 56 -> 2, sentence level
    esc_model: MlpModel  # 500 -> 56 -> 2, sentence level
    vt_model: MlpModel   # 39 -> 21 -> 2, frame level + majority voting
    vt_scaler: FeatureScaler
    stage2_weights: FusionWeights = field(
        default_factory=lambda: FusionWeights(np.array(UNIVERSAL_STAGE2)))
    stage3_weights: FusionWeights = field(
        default_factory=lambda: FusionWeights(np.array(UNIVERSAL_STAGE3)))
    stage2_searched: bool = False
    stage3_searched: bool = False


@dataclass
class SmcUtterance:
    """Preprocessed per-utterance SMC features."""

    pc: Contour
    esc: Contour
    vt: FeatureMatrix
    mode_class: int | None = None
    utterance_id: str = ""
    language: str = ""
    speaker_id: str = ""
    split: str = "train"


def fuse_scores(scores: list[ScoreVector], weights: FusionWeights) -> ScoreVector:
    """Convex combination of per-model score vectors."""
    if len(scores) != len(weights):
        raise ValueError("need exactly one weight per score vector")
    r = len(scores[0].scores)
    for s in scores:
        if len(s.scores) != r:
            raise ValueError("score vectors must share the class count")
    fused = np.zeros(r)
    for s, w in zip(scores, weights.w):
        fused += w * s.scores
    total = float(fused.sum())
    if abs(total - 1.0) > 1e-12 and total > 0:
        fused /= total
    name = "fused(" + "+".join(s.source_model for s in scores) + ")"
    return ScoreVector(fused, name)


def fusion_weight_candidates(step: float = 0.01) -> list[float]:
    """First-model weights explored by the grid search (0.98 values at step 0.01)."""
    count = int(round(1.0 / step)) - 2
    return [round((i + 1) * step, 10) for i in range(count)]


def search_weights(dev_scores_per_model: list[list[ScoreVector]], dev_labels,
                   step: float = 0.01) -> tuple[FusionWeights, float]:
    """Grid-search two-model fusion weights for best dev accuracy.

    Ties prefer the larger weight on the second (later-listed) model, which
    is the orientation the stage-2/3 optima use (ESC / VT heavier).
    """
    if len(dev_scores_per_model) != 2:
        raise ValueError("weight search expects exactly two models")
    labels = np.asarray(list(dev_labels), dtype=np.int64)
    if labels.size == 0:
        raise ValueError("dev set is empty")
    a = np.vstack([s.scores for s in dev_scores_per_model[0]])
    b = np.vstack([s.scores for s in dev_scores_per_model[1]])
    if a.shape != b.shape or a.shape[0] != labels.size:
        raise ValueError("score lists and labels must align")
    best_w = None
    best_acc = -1.0
    for w1 in fusion_weight_candidates(step):
        fused = w1 * a + (1.0 - w1) * b
        acc = float(np.mean(np.argmax(fused, axis=1) == labels))
        if acc > best_acc:  # strict: first (smallest w1) candidate wins ties
            best_acc = acc
            best_w = w1
    return FusionWeights(np.array([best_w, 1.0 - best_w])), best_acc


def prepare_smc_utterance(w: Waveform, grid: FrameGrid | None = None,
                          silence_ratio: float = 0.06,
                          duration_s: float = 5.0) -> tuple[Contour, Contour, FeatureMatrix]:
    """Silence-removal, 5 s chop, then PC / ESC / MFCC39 extraction.

    Raises LengthError when less than 5 s of speech survives silence removal.
    """
    speech = remove_silence(w, silence_ratio)
    if speech.duration_s < duration_s:
        raise LengthError(
            f"only {speech.duration_s:.2f} s of speech after silence removal; "
            f"SMC needs {duration_s:.1f} s")
    speech = chop_fixed(speech, duration_s)
    if grid is None:
        grid = FrameGrid.for_rate(speech.sample_rate_hz)
    z = zff(speech)
    epochs = extract_epochs(z, speech)
    n = len(speech.samples)
    pc = pitch_contour(epochs, n, speech.sample_rate_hz)
    esc = epoch_strength_contour(epochs, n, speech.sample_rate_hz)
    vt = mfcc_with_deltas(speech, grid)
    return pc, esc, vt


def _contour_input(c: Contour) -> np.ndarray:
    if c.kind == "pitch":
        return c.values / PITCH_INPUT_SCALE
    return c.values


def _sentence_scores(model: MlpModel, utts: list[SmcUtterance], which: str) -> list[ScoreVector]:
    out = []
    for u in utts:
        c = u.pc if which == "pc" else u.esc
        out.append(ScoreVector(forward(model, _contour_input(c)), f"{which}-smc"))
    return out


def _vt_scores(model: MlpModel, scaler: FeatureScaler,
               utts: list[SmcUtterance]) -> list[ScoreVector]:
    out = []
    for u in utts:
        _, fractions = classify_sentence_majority(model, scaler.apply(u.vt.data))
        out.append(ScoreVector(fractions, "vt-smc"))
    return out


@dataclass
class SmcTrainSettings:
    pc_hidden: int = 56
    esc_hidden: int = 56
    vt_hidden: int = 21
    suprasegmental_epochs: int = 200
    vt_epochs: int = 600
    learning_rate: float = 0.005
    loss: str = "mse"
    vt_frame_subsample: int = 4  # keep every n-th frame for VT training
    seed: int = 0
    weight_step: float = 0.01
    search_fusion_weights: bool = True


@dataclass
class SmcTrainReport:
    stage2_weights: tuple[float, float]
    stage3_weights: tuple[float, float]
    stage2_dev_accuracy: float | None
    stage3_dev_accuracy: float | None
    matches_universal: bool
    candidate_count: int


def train_smc(train_utts: list[SmcUtterance], dev_utts: list[SmcUtterance],
              settings: SmcTrainSettings | None = None) -> tuple[SmcSystem, SmcTrainReport]:
    """Train the three SMC component models and pick the fusion weights."""
    settings = settings or SmcTrainSettings()
    classes = {u.mode_class for u in train_utts}
    if classes != {0, 1}:
        raise ValueError("SMC training needs utterances from both modes")

    def one_hot(cls: int) -> np.ndarray:
        t = np.zeros(2)
        t[cls] = 1.0
        return t

    su_cfg = TrainConfig(settings.learning_rate, settings.suprasegmental_epochs,
                         settings.loss, shuffle_seed=settings.seed + 1)
    pc_data = [(_contour_input(u.pc), one_hot(u.mode_class)) for u in train_utts]
    esc_data = [(_contour_input(u.esc), one_hot(u.mode_class)) for u in train_utts]
    log.info("training PC-SMC (%d sentences, %d epochs)", len(pc_data), su_cfg.epochs)
    pc_model = train_sgd(pc_data, su_cfg, init_seed=settings.seed + 11,
                         hidden=settings.pc_hidden)
    log.info("training ESC-SMC (%d sentences, %d epochs)", len(esc_data), su_cfg.epochs)
    esc_model = train_sgd(esc_data, su_cfg, init_seed=settings.seed + 12,
                          hidden=settings.esc_hidden)

    vt_frames = np.vstack([u.vt.data[::settings.vt_frame_subsample] for u in train_utts])
    vt_scaler = FeatureScaler.fit(vt_frames)
    vt_data = []
    for u in train_utts:
        target = one_hot(u.mode_class)
        for row in vt_scaler.apply(u.vt.data[::settings.vt_frame_subsample]):
            vt_data.append((row, target))
    vt_cfg = TrainConfig(settings.learning_rate, settings.vt_epochs,
                         settings.loss, shuffle_seed=settings.seed + 2)
    log.info("training VT-SMC (%d frames, %d epochs)", len(vt_data), vt_cfg.epochs)
    vt_model = train_sgd(vt_data, vt_cfg, init_seed=settings.seed + 13,
                         hidden=settings.vt_hidden)

    system = SmcSystem(pc_model, esc_model, vt_model, vt_scaler)
    stage2_acc = stage3_acc = None
    if dev_utts and settings.search_fusion_weights:
        labels = [u.mode_class for u in dev_utts]
        pc_scores = _sentence_scores(pc_model, dev_utts, "pc")
        esc_scores = _sentence_scores(esc_model, dev_utts, "esc")
        w2, stage2_acc = search_weights([pc_scores, esc_scores], labels,
                                        settings.weight_step)
        src_scores = [fuse_scores([p, e], w2) for p, e in zip(pc_scores, esc_scores)]
        vt_scores = _vt_scores(vt_model, vt_scaler, dev_utts)
        w3, stage3_acc = search_weights([src_scores, vt_scores], labels,
                                        settings.weight_step)
        system.stage2_weights = w2
        system.stage3_weights = w3
        system.stage2_searched = True
        system.stage3_searched = True
    else:
        log.warning("no dev split available: falling back to the universal "
                    "fusion weights %s / %s", UNIVERSAL_STAGE2, UNIVERSAL_STAGE3)

    w2t = tuple(round(float(x), 6) for x in system.stage2_weights.w)
    w3t = tuple(round(float(x), 6) for x in system.stage3_weights.w)
    report = SmcTrainReport(
        stage2_weights=w2t,
        stage3_weights=w3t,
        stage2_dev_accuracy=stage2_acc,
        stage3_dev_accuracy=stage3_acc,
        matches_universal=(w2t == UNIVERSAL_STAGE2 and w3t == UNIVERSAL_STAGE3),
        candidate_count=len(fusion_weight_candidates(settings.weight_step)),
    )
    return system, report


def classify_utterance(system: SmcSystem, utt: SmcUtterance):
    """Mode decision plus every intermediate score vector."""
    pc_score = ScoreVector(forward(system.pc_model, _contour_input(utt.pc)), "pc-smc")
    esc_score = ScoreVector(forward(system.esc_model, _contour_input(utt.esc)), "esc-smc")
    src_score = fuse_scores([pc_score, esc_score], system.stage2_weights)
    _, fractions = classify_sentence_majority(system.vt_model,
                                              system.vt_scaler.apply(utt.vt.data))
    vt_score = ScoreVector(fractions, "vt-smc")
    final = fuse_scores([src_score, vt_score], system.stage3_weights)
    traces = {"pc": pc_score, "esc": esc_score, "src": src_score,
              "vt": vt_score, "src_vt": final}
    return MODE_CLASSES[final.decision], traces


def classify_mode(system: SmcSystem, w: Waveform, grid: FrameGrid | None = None,
                  silence_ratio: float = 0.06):
    """Preprocess a raw waveform and classify its speech mode."""
    pc, esc, vt = prepare_smc_utterance(w, grid, silence_ratio)
    utt = SmcUtterance(pc=pc, esc=esc, vt=vt)
    return classify_utterance(system, utt)
