"""Mode-specific multilingual phone recognition.

The recognizer is a frame-level phone classifier (tandem posteriors feeding
an acoustic perceptron over a configurable feature concatenation) decoded by
Viterbi over single-state phones with self-loops and an add-k bigram phone
language model.  The path score is

    sum_t log P(phone_t | frame_t) + alpha * (initial log-prob
        + bigram log-prob at every phone change)

with a minimum phone duration of 3 frames (disabled in oracle comparisons).
Training alignments start from uniform (flat-start) segmentation of the
transcript over the utterance frames, optionally refined by one forced
realignment pass with the trained frame classifier.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .audio_io import Waveform, remove_silence
from .errors import InventoryError, LengthError
from .excitation import lp_residual, mpdss, rmfcc
from .neural import MlpModel, TrainConfig, forward_batch, train_sgd
from .smc import FeatureScaler, SmcSystem, classify_mode
from .spectral import FeatureMatrix, FrameGrid, concat_features, mfcc_with_deltas

log = logging.getLogger(__name__)

NEG_INF = float("-inf")
DEFAULT_MIN_DURATION = 3
DEFAULT_FEATURES = ("MFCC39", "TANDEM", "RMFCC39", "MPDSS25")
BASELINE_FEATURES = ("MFCC39", "TANDEM")


@dataclass(frozen=True)
class PhoneInventory:
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise InventoryError("phone labels must be unique")
        if not self.labels:
            raise InventoryError("phone inventory is empty")

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InventoryError(f"phone label {label!r} not in inventory") from None

    @classmethod
    def from_transcripts(cls, transcripts) -> "PhoneInventory":
        seen: list[str] = []
        for t in transcripts:
            for label in t:
                if label not in seen:
                    seen.append(label)
        return cls(tuple(sorted(seen)))


@dataclass(frozen=True)
class PhoneSequence:
    indices: tuple[int, ...]
    inventory: PhoneInventory

    def __post_init__(self):
        for i in self.indices:
            if not 0 <= i < self.inventory.size:
                raise InventoryError(f"phone index {i} outside inventory")

    @classmethod
    def from_labels(cls, labels, inventory: PhoneInventory) -> "PhoneSequence":
        return cls(tuple(inventory.index(l) for l in labels), inventory)

    def labels(self) -> tuple[str, ...]:
        return tuple(self.inventory.labels[i] for i in self.indices)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class BigramLm:
    log_prob: np.ndarray  # size x size, rows sum to 1 in probability
    initial: np.ndarray   # size
    smoothing_k: float
    inventory: PhoneInventory


def train_lm(transcripts: list[PhoneSequence], smoothing_k: float = 0.5,
             inventory: PhoneInventory | None = None) -> BigramLm:
    """Add-k smoothed bigram model with an initial-phone distribution.

    With k = 0, contexts never seen in training get a uniform row (an
    all-impossible row would poison decoding); unseen transitions from seen
    contexts stay at probability 0.
    """
    if not transcripts:
        raise ValueError("no transcripts to train the language model on")
    if inventory is None:
        inventory = transcripts[0].inventory
    size = inventory.size
    counts = np.zeros((size, size))
    initial = np.zeros(size)
    for t in transcripts:
        if len(t) == 0:
            continue
        initial[t.indices[0]] += 1
        for a, b in zip(t.indices[:-1], t.indices[1:]):
            counts[a, b] += 1

    def normalize(row: np.ndarray) -> np.ndarray:
        smoothed = row + smoothing_k
        total = smoothed.sum()
        if total == 0.0:
            return np.full(size, 1.0 / size)
        return smoothed / total

    with np.errstate(divide="ignore"):
        log_prob = np.log(np.vstack([normalize(counts[i]) for i in range(size)]))
        log_initial = np.log(normalize(initial))
    return BigramLm(log_prob, log_initial, smoothing_k, inventory)


def flat_start_alignment(n_frames: int, phones: PhoneSequence) -> np.ndarray:
    """Uniform segmentation of the transcript across the frames."""
    if n_frames <= 0:
        raise LengthError("cannot align over zero frames")
    k = len(phones)
    bounds = np.linspace(0, n_frames, k + 1).round().astype(int)
    labels = np.zeros(n_frames, dtype=np.int64)
    for i in range(k):
        labels[bounds[i]:bounds[i + 1]] = phones.indices[i]
    return labels


def forced_alignment(log_posts: np.ndarray, phones: PhoneSequence) -> np.ndarray:
    """Viterbi alignment of a known transcript to the frame posteriors."""
    t_count, _ = log_posts.shape
    k = len(phones)
    if k > t_count:
        return flat_start_alignment(t_count, phones)
    emit = log_posts[:, list(phones.indices)]  # t x k
    score = np.full((t_count, k), NEG_INF)
    back = np.zeros((t_count, k), dtype=np.int64)
    score[0, 0] = emit[0, 0]
    for t in range(1, t_count):
        stay = score[t - 1]
        advance = np.concatenate(([NEG_INF], score[t - 1, :-1]))
        better = advance > stay
        score[t] = np.where(better, advance, stay) + emit[t]
        back[t] = np.where(better, np.arange(k) - 1, np.arange(k))
    labels = np.zeros(t_count, dtype=np.int64)
    pos = k - 1
    for t in range(t_count - 1, -1, -1):
        labels[t] = phones.indices[pos]
        pos = back[t, pos]
    return labels


@dataclass
class AcousticModel:
    """Frame classifier over a feature concatenation, with its scaler."""

    mlp: MlpModel
    scaler: FeatureScaler
    feature_spec: tuple[str, ...]
    inventory: PhoneInventory
    log_priors: np.ndarray | None = None
    divide_by_priors: bool = False

    def posteriors(self, features: FeatureMatrix) -> np.ndarray:
        if features.dim != self.mlp.n_inputs:
            raise ValueError(
                f"feature dim {features.dim} does not match model input "
                f"{self.mlp.n_inputs} (spec {self.feature_spec})")
        return forward_batch(self.mlp, self.scaler.apply(features.data))

    def log_likelihoods(self, features: FeatureMatrix) -> np.ndarray:
        posts = np.log(np.maximum(self.posteriors(features), 1e-300))
        if self.divide_by_priors and self.log_priors is not None:
            posts = posts - self.log_priors[None, :]
        return posts


@dataclass
class MprsSettings:
    tandem_hidden: int = 32
    tandem_epochs: int = 40
    acoustic_hidden: int = 48
    acoustic_epochs: int = 60
    learning_rate: float = 0.005
    loss: str = "mse"
    frame_subsample: int = 2
    realign_passes: int = 1
    smoothing_k: float = 0.5
    lp_order: int = 10
    feature_spec: tuple[str, ...] = DEFAULT_FEATURES
    divide_by_priors: bool = False
    seed: int = 0


@dataclass
class MprsModel:
    tandem: AcousticModel            # MFCC39 -> phone posterior extractor
    acoustic: AcousticModel          # full feature concatenation -> posteriors
    lm: BigramLm
    inventory: PhoneInventory
    settings: MprsSettings = field(default_factory=MprsSettings)


def extract_base_features(w: Waveform, grid: FrameGrid | None = None,
                          lp_order: int = 10) -> dict[str, FeatureMatrix]:
    """MFCC39 / RMFCC39 / MPDSS25 for one (already preprocessed) waveform."""
    if grid is None:
        grid = FrameGrid.for_rate(w.sample_rate_hz)
    residual = lp_residual(w, lp_order, grid)
    return {
        "MFCC39": mfcc_with_deltas(w, grid),
        "RMFCC39": rmfcc(residual, grid),
        "MPDSS25": mpdss(residual, grid),
    }


def _train_frame_classifier(frames: np.ndarray, labels: np.ndarray, n_classes: int,
                            hidden: int, epochs: int, lr: float, loss: str,
                            subsample: int, seed: int) -> tuple[MlpModel, FeatureScaler]:
    frames = frames[::subsample]
    labels = labels[::subsample]
    scaler = FeatureScaler.fit(frames)
    scaled = scaler.apply(frames)
    eye = np.eye(n_classes)
    data = [(scaled[i], eye[labels[i]]) for i in range(len(labels))]
    cfg = TrainConfig(lr, epochs, loss, shuffle_seed=seed + 1)
    model = train_sgd(data, cfg, init_seed=seed, hidden=hidden)
    return model, scaler


def train_tandem(features_by_utt: list[FeatureMatrix],
                 transcripts: list[PhoneSequence],
                 inventory: PhoneInventory,
                 settings: MprsSettings | None = None) -> AcousticModel:
    """Train the phone-posterior extractor on MFCC39 with flat-start labels.

    One forced realignment pass (settings.realign_passes) re-labels the
    frames with the trained classifier and retrains.
    """
    settings = settings or MprsSettings()
    for t in transcripts:
        for i in t.indices:
            if i >= inventory.size:
                raise InventoryError("transcript index outside the inventory")

    def assemble(label_fn):
        frames = np.vstack([f.data for f in features_by_utt])
        labels = np.concatenate([label_fn(f, t) for f, t in zip(features_by_utt, transcripts)])
        return frames, labels

    frames, labels = assemble(lambda f, t: flat_start_alignment(f.n_frames, t))
    model, scaler = _train_frame_classifier(
        frames, labels, inventory.size, settings.tandem_hidden, settings.tandem_epochs,
        settings.learning_rate, settings.loss, settings.frame_subsample,
        settings.seed + 101)
    am = AcousticModel(model, scaler, ("MFCC39",), inventory)
    for _ in range(settings.realign_passes):
        def realign(f, t, am=am):
            return forced_alignment(am.log_likelihoods(f), t)
        frames, labels = assemble(realign)
        model, scaler = _train_frame_classifier(
            frames, labels, inventory.size, settings.tandem_hidden,
            settings.tandem_epochs, settings.learning_rate, settings.loss,
            settings.frame_subsample, settings.seed + 102)
        am = AcousticModel(model, scaler, ("MFCC39",), inventory)
    return am


def tandem_features(extractor: AcousticModel, mfcc39: FeatureMatrix) -> FeatureMatrix:
    posts = extractor.posteriors(mfcc39)
    return FeatureMatrix(posts, "TANDEM", mfcc39.frame_shift_s)


def assemble_features(base: dict[str, FeatureMatrix], tandem: FeatureMatrix | None,
                      spec: tuple[str, ...]) -> FeatureMatrix:
    parts = []
    for kind in spec:
        if kind == "TANDEM":
            if tandem is None:
                raise ValueError("feature spec requires TANDEM but none was provided")
            parts.append(tandem)
        else:
            parts.append(base[kind])
    return concat_features(parts)


def train_mprs(features_by_utt: list[dict[str, FeatureMatrix]],
               transcripts: list[PhoneSequence],
               inventory: PhoneInventory,
               settings: MprsSettings | None = None) -> MprsModel:
    """Tandem extractor, acoustic model over the feature spec, and bigram LM."""
    settings = settings or MprsSettings()
    mfccs = [f["MFCC39"] for f in features_by_utt]
    log.info("training tandem extractor (%d utterances)", len(mfccs))
    tandem_model = train_tandem(mfccs, transcripts, inventory, settings)

    full = [assemble_features(base, tandem_features(tandem_model, base["MFCC39"]),
                              settings.feature_spec)
            for base in features_by_utt]
    frames = np.vstack([f.data for f in full])
    labels = np.concatenate([
        forced_alignment(tandem_model.log_likelihoods(m), t)
        for m, t in zip(mfccs, transcripts)])
    log.info("training acoustic model (%d frames, dim %d)", len(frames), frames.shape[1])
    model, scaler = _train_frame_classifier(
        frames, labels, inventory.size, settings.acoustic_hidden,
        settings.acoustic_epochs, settings.learning_rate, settings.loss,
        settings.frame_subsample, settings.seed + 201)
    label_counts = np.bincount(labels, minlength=inventory.size).astype(np.float64)
    with np.errstate(divide="ignore"):
        log_priors = np.log(label_counts / label_counts.sum())
    acoustic = AcousticModel(model, scaler, settings.feature_spec, inventory,
                             log_priors, settings.divide_by_priors)
    lm = train_lm(transcripts, settings.smoothing_k, inventory)
    return MprsModel(tandem_model, acoustic, lm, inventory, settings)


def viterbi_decode(log_posts: np.ndarray, lm: BigramLm, alpha: float = 1.0,
                   min_duration: int = DEFAULT_MIN_DURATION) -> tuple[int, ...]:
    """Best phone sequence under acoustic + alpha * language-model log-score.

    States are (phone, frames-so-far capped at min_duration); a phone change
    is only allowed once the current phone has lasted min_duration frames,
    and the final phone must satisfy the same bound.  Consecutive identical
    phones collapse to one emitted symbol.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    t_count, k = log_posts.shape
    if t_count == 0:
        raise LengthError("cannot decode a zero-length feature stream")
    d = max(1, int(min_duration))
    if t_count < d:
        # too short for any legal path: best single phone over all frames
        best = int(np.argmax(log_posts.sum(axis=0) + alpha * lm.initial))
        return (best,)

    # score[j, s]: best path ending at phone j with duration state s
    score = np.full((k, d), NEG_INF)
    back_phone = np.full((t_count, k, d), -1, dtype=np.int64)
    back_state = np.full((t_count, k, d), -1, dtype=np.int64)
    score[:, 0] = log_posts[0] + alpha * lm.initial
    change = alpha * lm.log_prob.copy()
    np.fill_diagonal(change, NEG_INF)  # re-entering the same phone is meaningless

    for t in range(1, t_count):
        new_score = np.full((k, d), NEG_INF)
        # advance the duration count within the same phone
        for s in range(1, d):
            new_score[:, s] = score[:, s - 1]
            back_phone[t, :, s] = np.arange(k)
            back_state[t, :, s] = s - 1
        # self-loop in the mature state
        stay_mature = score[:, d - 1]
        better = stay_mature > new_score[:, d - 1]
        new_score[better, d - 1] = stay_mature[better]
        back_phone[t, better, d - 1] = np.flatnonzero(better)
        back_state[t, better, d - 1] = d - 1
        # change phone: only allowed out of mature states
        from_scores = stay_mature[:, None] + change  # prev phone i -> new phone j
        best_prev = np.argmax(from_scores, axis=0)
        enter = from_scores[best_prev, np.arange(k)]
        better = enter > new_score[:, 0]
        new_score[better, 0] = enter[better]
        back_phone[t, better, 0] = best_prev[better]
        back_state[t, better, 0] = d - 1
        score = new_score + log_posts[t][:, None]

    final_phone = int(np.argmax(score[:, d - 1]))
    if not np.isfinite(score[final_phone, d - 1]):
        best = int(np.argmax(log_posts.sum(axis=0) + alpha * lm.initial))
        return (best,)
    path = np.zeros(t_count, dtype=np.int64)
    phone, state = final_phone, d - 1
    for t in range(t_count - 1, 0, -1):
        path[t] = phone
        phone, state = back_phone[t, phone, state], back_state[t, phone, state]
    path[0] = phone
    collapsed = [int(path[0])]
    for v in path[1:]:
        if v != collapsed[-1]:
            collapsed.append(int(v))
    return tuple(collapsed)


def decode(mprs: MprsModel, features: dict[str, FeatureMatrix], alpha: float = 1.0,
           min_duration: int = DEFAULT_MIN_DURATION) -> PhoneSequence:
    """Decode one utterance's base features into a phone sequence."""
    tandem = tandem_features(mprs.tandem, features["MFCC39"])
    full = assemble_features(features, tandem, mprs.acoustic.feature_spec)
    log_posts = mprs.acoustic.log_likelihoods(full)
    indices = viterbi_decode(log_posts, mprs.lm, alpha, min_duration)
    return PhoneSequence(indices, mprs.inventory)


def decode_waveform(mprs: MprsModel, w: Waveform, alpha: float = 1.0,
                    min_duration: int = DEFAULT_MIN_DURATION,
                    grid: FrameGrid | None = None) -> PhoneSequence:
    feats = extract_base_features(w, grid, mprs.settings.lp_order)
    return decode(mprs, feats, alpha, min_duration)


@dataclass
class CombSystem:
    """Two-stage recognizer: SMC front-end routing to per-mode recognizers."""

    smc: SmcSystem
    read_mprs: MprsModel
    conv_mprs: MprsModel


def build_comb_system(smc: SmcSystem, read_mprs: MprsModel,
                      conv_mprs: MprsModel) -> CombSystem:
    return CombSystem(smc, read_mprs, conv_mprs)


def comb_recognize(system: CombSystem, w: Waveform, alpha: float = 1.0,
                   min_duration: int = DEFAULT_MIN_DURATION,
                   grid: FrameGrid | None = None, silence_ratio: float = 0.06):
    """Classify the mode, then decode with the matching recognizer.

    Returns (mode, PhoneSequence, traces); traces carry the SMC score vectors
    plus the routing decision.
    """
    mode, traces = classify_mode(system.smc, w, grid, silence_ratio)
    mprs = system.read_mprs if mode == "read" else system.conv_mprs
    traces = dict(traces)
    traces["routed_to"] = mode
    speech = remove_silence(w, silence_ratio)
    phones = decode_waveform(mprs, speech, alpha, min_duration, grid)
    return mode, phones, traces
