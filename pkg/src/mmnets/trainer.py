"""Three-stage training loop with freezing, pseudo-pairs, alignment
monitoring, and binary checkpoints.

The loop is task-generic over an anchor modality paired separately with two
other modalities.  Each iteration draws one batch from each paired set and
evaluates every enabled loss term; Adam steps skip frozen parameter groups,
and the discriminator (when present) takes its own step per iteration.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import engine as E
from . import losses as L
from .engine import Tensor, no_grad
from .networks import (ArchConfig, Discriminator, LatentCode, ModalitySpec,
                       decode, encode, build_modality_nets, fuse_latents,
                       concat_codes, split_code)
from .data import DatasetSplit, OpponentSplit

METRIC_COLUMNS = ("iteration", "stage", "loss_total", "loss_rgb", "loss_seg",
                  "loss_depth", "loss_lat", "loss_pp", "af_rs", "af_rd", "af_ds")

RECON_KINDS = ("l2", "ce", "berhu")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class StageConfig:
    stage_id: int
    iterations: int
    lr: float
    weights: L.LossWeights
    autoencoders: bool = False
    latent_consistency: bool = False
    noise_sigma: float = 0.0
    pseudo_pairs: bool = False
    frozen: frozenset = frozenset()

    def __post_init__(self):
        self.frozen = frozenset(self.frozen)
        if self.stage_id not in (1, 2, 3):
            raise ValueError(f"stage_id must be 1..3, got {self.stage_id}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def default_stages(anchor="rgb", scale=1.0):
    """Desk-scale schedule: 2000/2000/1000 iterations at lr 2e-4/2e-4/2e-5.

    Stage 1 trains translators only; stage 2 freezes the anchor encoder and
    adds autoencoders, latent consistency, and latent noise; stage 3 keeps
    all of that and adds the pseudo-pair objective.
    """
    frozen = frozenset({f"enc_{anchor}"})
    return [
        StageConfig(1, max(1, round(2000 * scale)), 2e-4,
                    L.LossWeights(r=1, s=100, d=10, a=1, l2=1, pp=0)),
        StageConfig(2, max(1, round(2000 * scale)), 2e-4,
                    L.LossWeights(r=10, s=100, d=10, a=10, l2=100, pp=0),
                    autoencoders=True, latent_consistency=True,
                    noise_sigma=0.5, frozen=frozen),
        StageConfig(3, max(1, round(1000 * scale)), 2e-5,
                    L.LossWeights(r=10, s=100, d=10, a=10, l2=100, pp=100),
                    autoencoders=True, latent_consistency=True,
                    noise_sigma=0.5, pseudo_pairs=True, frozen=frozen),
    ]


@dataclass
class ModalityTask:
    """A modality's pixel spec plus its reconstruction loss role."""

    spec: ModalitySpec
    recon: str                   # l2 | ce | berhu
    gan: bool = False

    def __post_init__(self):
        if self.recon not in RECON_KINDS:
            raise ValueError(f"unknown reconstruction kind {self.recon!r}")


@dataclass
class TranslationTask:
    """Anchor modality plus the two modalities it is separately paired with."""

    anchor: ModalityTask
    mod_b: ModalityTask
    mod_c: ModalityTask

    @property
    def all(self):
        return (self.anchor, self.mod_b, self.mod_c)

    @property
    def names(self):
        return tuple(m.spec.name for m in self.all)

    def gan_modality(self):
        flagged = [m for m in self.all if m.gan]
        if len(flagged) > 1:
            raise ValueError("at most one modality may carry the adversarial loss")
        return flagged[0] if flagged else None


def scenes_task(k=8, side_info="pool") -> TranslationTask:
    """Color anchor paired with class maps and inverse depth."""
    return TranslationTask(
        anchor=ModalityTask(ModalitySpec("rgb", 3, "none", "bounded"), "l2", gan=True),
        mod_b=ModalityTask(ModalitySpec("seg", k, side_info, "softmax"), "ce"),
        mod_c=ModalityTask(ModalitySpec("depth", 1, side_info, "bounded"), "berhu"))


def opponent_task(side_info="pool") -> TranslationTask:
    """Opponent-channel anchor paired with the second channel and full color."""
    return TranslationTask(
        anchor=ModalityTask(ModalitySpec("theta1", 1, "none", "linear"), "l2"),
        mod_b=ModalityTask(ModalitySpec("theta2", 1, side_info, "linear"), "l2"),
        mod_c=ModalityTask(ModalitySpec("theta3", 3, side_info, "bounded"), "l2",
                           gan=True))


# ---------------------------------------------------------------------------
# train state
# ---------------------------------------------------------------------------

@dataclass
class AlignmentReport:
    """Mean cosine similarity of paired latent features, per modality pair."""

    af_rs: float        # anchor vs mod_b
    af_rd: float        # anchor vs mod_c
    af_ds: float        # mod_b vs mod_c


class TrainState:
    """All networks, optimizer moments, the master rng, and metric history."""

    def __init__(self, task: TranslationTask, arch: ArchConfig, seed,
                 batch_size=6):
        self.task = task
        self.arch = arch
        self.seed = int(seed)
        self.batch_size = int(batch_size)
        self.encoders, self.decoders = {}, {}
        for offset, mod in enumerate(task.all):
            enc, dec = build_modality_nets(mod.spec, arch, seed=self.seed + offset)
            self.encoders[mod.spec.name] = enc
            self.decoders[mod.spec.name] = dec
        gan_mod = task.gan_modality()
        self.disc = None
        if gan_mod is not None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xD15C]))
            self.disc = Discriminator(gan_mod.spec.channels, arch.stage_widths,
                                      rng, arch.init_sigma)
        self.groups = {}
        for name, enc in self.encoders.items():
            self.groups[f"enc_{name}"] = enc.params()
        for name, dec in self.decoders.items():
            self.groups[f"dec_{name}"] = dec.params()
        if self.disc is not None:
            self.groups["disc"] = self.disc.params()
        self.adam = {g: E.AdamState.for_params(ps) for g, ps in self.groups.items()}
        self.rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x7EA1]))
        self.frozen_latents = {}
        self.iteration = 0
        self.history = []
        self.last_alignment = AlignmentReport(float("nan"), float("nan"), float("nan"))
        self.last_components = set()

    # -- parameters ----------------------------------------------------------
    def zero_grads(self):
        for params in self.groups.values():
            for p in params:
                p.grad = None

    def arrays(self):
        """Stable name -> array map covering weights, BN stats, and moments."""
        out = {}
        for enc in self.encoders.values():
            out.update(enc.arrays())
        for dec in self.decoders.values():
            out.update(dec.arrays())
        if self.disc is not None:
            out.update(self.disc.arrays())
        for g in sorted(self.adam):
            state = self.adam[g]
            for i, (m, v) in enumerate(zip(state.m, state.v)):
                out[f"opt.{g}.m{i}"] = m
                out[f"opt.{g}.v{i}"] = v
        return out

    def checksum(self):
        acc = 0
        arrays = self.arrays()
        for key in sorted(arrays):
            acc = zlib.crc32(np.ascontiguousarray(arrays[key]).tobytes(), acc)
        return acc

    def group_checksum(self, group):
        acc = 0
        for p in self.groups[group]:
            acc = zlib.crc32(np.ascontiguousarray(p.data).tobytes(), acc)
        return acc


def build_train_state(task, arch=None, seed=0, batch_size=6) -> TrainState:
    return TrainState(task, arch or ArchConfig(), seed, batch_size)


# ---------------------------------------------------------------------------
# data adaptation
# ---------------------------------------------------------------------------

@dataclass
class TaskData:
    """Paired sets in (anchor, other) order plus full test triples."""

    d_ab: list
    d_ac: list
    test: list          # (anchor, b, c) raw samples

    def validate(self):
        if not self.d_ab or not self.d_ac:
            raise ValueError("training split is empty")


def adapt_split(split) -> TaskData:
    if isinstance(split, TaskData):
        return split
    if isinstance(split, DatasetSplit):
        return TaskData(d_ab=list(split.d_rs), d_ac=list(split.d_rd),
                        test=[(t.rgb, t.seg, t.depth) for t in split.d_ds_test])
    if isinstance(split, OpponentSplit):
        return TaskData(d_ab=list(split.d_12), d_ac=list(split.d_13),
                        test=[(s.theta1, s.theta2, s.theta3) for s in split.test])
    raise TypeError(f"cannot adapt split of type {type(split).__name__}")


def onehot_labels(labels, k):
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], k) + labels.shape[1:], dtype=np.float32)
    np.put_along_axis(out, labels[:, None], 1.0, axis=1)
    return out


def _stack(mod: ModalityTask, raws):
    """(input tensor, reconstruction target) for a batch of raw samples."""
    if mod.recon == "ce":
        labels = np.stack([np.asarray(r) for r in raws])
        return Tensor(onehot_labels(labels, mod.spec.channels)), labels
    imgs = np.stack([np.asarray(r, dtype=np.float32) for r in raws])
    return Tensor(imgs), imgs


def _recon_loss(kind, pred, target):
    if kind == "l2":
        return L.l2_loss(pred, target)
    if kind == "berhu":
        return L.berhu_loss(pred, target)
    return L.cross_entropy_loss(pred, target)


def _harden(kind, pseudo):
    """Turn a detached pseudo target into the form _recon_loss expects."""
    if kind == "ce":
        return np.argmax(pseudo.data, axis=1)
    return pseudo.data


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _encode(state: TrainState, mod: ModalityTask, image, stage: StageConfig):
    name = mod.spec.name
    frozen = f"enc_{name}" in stage.frozen
    code = encode(state.encoders[name], image,
                  noise_sigma=stage.noise_sigma,
                  rng=state.rng if stage.noise_sigma > 0 else None,
                  training=not frozen)
    # detaching a frozen encoder's output prunes its slice of the backward
    # pass; its parameters take no step anyway
    return code.detach() if frozen else code


def _cached_anchor_features(state: TrainState, anchor: ModalityTask, data,
                            picks_and_batches):
    """Per-sample latent features of the frozen anchor encoder, memoized.

    While the anchor encoder is frozen it runs in eval mode, so its features
    for a given sample are constant; they are computed on first use and
    reused afterwards.  The cache self-invalidates when the encoder weights
    or the dataset object change.
    """
    name = anchor.spec.name
    enc = state.encoders[name]
    key = (state.group_checksum(f"enc_{name}"),
           tuple(id(rows) for _, rows, _ in picks_and_batches))
    cache = state.frozen_latents
    if cache.get("key") != key:
        cache.clear()
        cache["key"] = key
    feat_parts, index_parts = [], None
    for side, rows, (pick, imgs) in picks_and_batches:
        entry = cache.get(side)
        if entry is None:
            probe = encode(enc, imgs[:1], training=False)
            feats = np.zeros((len(rows),) + probe.features.shape[1:],
                             dtype=probe.features.data.dtype)
            # pooling-index planes never exceed 2^16 positions at this scale
            indices = [(np.zeros((len(rows),) + pi.shape[1:], dtype=np.uint16),
                        pi.input_hw, pi.window) for pi in probe.index_stack]
            have = np.zeros(len(rows), dtype=bool)
            entry = cache[side] = (feats, indices, have)
            feats[pick[0]] = probe.features.data[0]
            for (flat, _, _), pi in zip(indices, probe.index_stack):
                flat[pick[0]] = pi.flat[0]
            have[pick[0]] = True
        feats, indices, have = entry
        pos = np.flatnonzero(~have[pick])
        if pos.size:
            code = encode(enc, imgs[pos], training=False)
            feats[pick[pos]] = code.features.data
            for (flat, _, _), pi in zip(indices, code.index_stack):
                flat[pick[pos]] = pi.flat
            have[pick[pos]] = True
        feat_parts.append(feats[pick])
        if index_parts is None:
            index_parts = [[] for _ in indices]
        for dst, (flat, _, _) in zip(index_parts, indices):
            dst.append(flat[pick])
    meta = [(hw, win) for _, hw, win in cache[picks_and_batches[0][0]][1]]
    index_stack = [
        E.PoolIndices(np.concatenate(level).astype(np.int64), hw, win)
        for level, (hw, win) in zip(index_parts, meta)]
    return np.concatenate(feat_parts), index_stack


def _decode(state: TrainState, mod: ModalityTask, code, stage: StageConfig):
    name = mod.spec.name
    return decode(state.decoders[name], code,
                  training=f"dec_{name}" not in stage.frozen)


def _concat_targets(mod: ModalityTask, targets):
    if len(targets) == 1:
        return targets[0]
    return np.concatenate(targets, axis=0)


def train_iteration(state: TrainState, stage: StageConfig, data: TaskData):
    """One optimization step over a fresh batch from each paired set.

    Forward passes are merged per network: each encoder and decoder runs
    once on a concatenated batch.  Since every merged job has the same batch
    size, one loss over the concatenation equals the average of the per-job
    losses.
    """
    task = state.task
    anchor, mod_b, mod_c = task.all
    bs = state.batch_size
    pick_ab = state.rng.integers(0, len(data.d_ab), size=bs)
    pick_ac = state.rng.integers(0, len(data.d_ac), size=bs)
    x_in, x_tgt = _stack(anchor, [data.d_ab[i][0] for i in pick_ab])
    y_in, y_tgt = _stack(mod_b, [data.d_ab[i][1] for i in pick_ab])
    x2_in, x2_tgt = _stack(anchor, [data.d_ac[i][0] for i in pick_ac])
    z_in, z_tgt = _stack(mod_c, [data.d_ac[i][1] for i in pick_ac])

    # the anchor encoder sees both paired batches in one pass; once frozen
    # (and carrying no side information) its per-sample features are
    # memoized instead of recomputed every iteration
    cacheable = (f"enc_{anchor.spec.name}" in stage.frozen
                 and all(m.spec.side_info != "skip" for m in task.all))
    xx = Tensor(np.concatenate([x_in.data, x2_in.data]))
    if cacheable:
        feats, index_stack = _cached_anchor_features(
            state, anchor, data,
            [("ab", data.d_ab, (pick_ab, x_in.data)),
             ("ac", data.d_ac, (pick_ac, x2_in.data))])
        if stage.noise_sigma > 0:
            noise = state.rng.normal(0.0, stage.noise_sigma,
                                     feats.shape).astype(feats.dtype)
            feats = feats + noise
        code_a_all = LatentCode(features=Tensor(feats), index_stack=index_stack,
                                source_modality=anchor.spec.name, skip_stack=[])
    else:
        code_a_all = _encode(state, anchor, xx, stage)
    code_b_y = _encode(state, mod_b, y_in, stage)
    code_c_z = _encode(state, mod_c, z_in, stage)
    code_ax = split_code(code_a_all, 0, bs)
    code_ax2 = split_code(code_a_all, bs, 2 * bs)

    components = {"t_ab", "t_ba", "t_ac", "t_ca"}
    jobs_a = [(code_b_y, x_tgt), (code_c_z, x2_tgt)]
    jobs_b = [(code_ax, y_tgt)]
    jobs_c = [(code_ax2, z_tgt)]
    if stage.autoencoders:
        jobs_a.append((code_ax, x_tgt))
        jobs_b.append((code_b_y, y_tgt))
        jobs_c.append((code_c_z, z_tgt))
        components |= {"ae_a", "ae_b", "ae_c"}

    buckets = {"l2": "rgb_l2", "ce": "seg", "berhu": "depth"}
    terms = {}
    gan_mod = task.gan_modality()
    gan_fakes = []

    def run_decoder(mod, jobs):
        out = _decode(state, mod, concat_codes([c for c, _ in jobs]), stage)
        piece = _recon_loss(mod.recon, out,
                            _concat_targets(mod, [t for _, t in jobs]))
        key = buckets[mod.recon]
        terms[key] = piece if key not in terms else E.add(terms[key], piece)
        if gan_mod is not None and mod is gan_mod:
            gan_fakes.append(out)

    run_decoder(anchor, jobs_a)
    run_decoder(mod_b, jobs_b)
    run_decoder(mod_c, jobs_c)

    if stage.latent_consistency:
        other = E.concat([code_b_y.features, code_c_z.features], axis=0)
        terms["lat"] = L.latent_consistency_loss(code_a_all.features, other)
        components.add("lat")

    if stage.pseudo_pairs:
        # pseudo targets come from anchor-involving translators; generated
        # with eval-mode normalization and no graph, so no gradient can
        # reach those translators
        with no_grad():
            pseudo_c = decode(state.decoders[mod_c.spec.name], code_ax,
                              training=False)
            pseudo_b = decode(state.decoders[mod_b.spec.name], code_ax2,
                              training=False)
        pred_bc = _decode(state, mod_c, code_b_y, stage)
        pred_cb = _decode(state, mod_b, code_c_z, stage)
        pp = E.add(_recon_loss(mod_c.recon, pred_bc, _harden(mod_c.recon, pseudo_c)),
                   _recon_loss(mod_b.recon, pred_cb, _harden(mod_b.recon, pseudo_b)))
        terms["pp"] = pp
        components.add("pp")
        if gan_mod is not None and mod_c is gan_mod:
            gan_fakes.append(pred_bc)

    if gan_mod is not None and gan_fakes:
        gan_reals = [img for img, mod in ((xx, anchor), (y_in, mod_b), (z_in, mod_c))
                     if mod is gan_mod]
        fakes = gan_fakes[0] if len(gan_fakes) == 1 else E.concat(gan_fakes, axis=0)
        reals = gan_reals[0] if len(gan_reals) == 1 else E.concat(gan_reals, axis=0)
        # generator pass: gradients must flow through the discriminator but
        # its own weight gradients are not needed until the separate D step
        disc_params = state.groups["disc"]
        for p in disc_params:
            p.requires_grad = False
        scores_fake = state.disc.forward(fakes, training=True)
        for p in disc_params:
            p.requires_grad = True
        terms["rgb_gan"] = L.lsgan_losses(np.ones(1), scores_fake)[1]
        components.add("gan")

    report = L.total_loss(terms, stage.weights)
    state.zero_grads()
    E.backward(report.total)
    for g, params in state.groups.items():
        if g == "disc" or g in stage.frozen:
            continue
        E.adam_step(params, None, state.adam[g])

    if gan_mod is not None and gan_fakes:
        state.zero_grads()
        scores_fake_d = state.disc.forward(fakes.detach(), training=True)
        scores_real = state.disc.forward(reals, training=True)
        d_loss, _ = L.lsgan_losses(scores_real, scores_fake_d)
        E.backward(d_loss)
        E.adam_step(state.groups["disc"], None, state.adam["disc"])

    state.iteration += 1
    state.last_components = components
    return report


def monitor_alignment(state: TrainState, test_triplets) -> AlignmentReport:
    """Mean pairwise cosine of noise-free latent features over test triples."""
    if not test_triplets:
        raise ValueError("alignment monitoring needs a non-empty test set")
    ins = [_stack(mod, [t[i] for t in test_triplets])[0]
           for i, mod in enumerate(state.task.all)]
    feats = []
    with no_grad():
        for mod, batch in zip(state.task.all, ins):
            code = encode(state.encoders[mod.spec.name], batch, noise_sigma=0.0,
                          training=False)
            feats.append(code.features.data.reshape(len(test_triplets), -1))

    def af(u, v):
        num = (u * v).sum(axis=1)
        den = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1) + 1e-12
        return float(np.mean(num / den))

    return AlignmentReport(af_rs=af(feats[0], feats[1]),
                           af_rd=af(feats[0], feats[2]),
                           af_ds=af(feats[1], feats[2]))


def run_schedule(state: TrainState, stages, split, log_every=10,
                 monitor_every=250) -> TrainState:
    """Execute the staged schedule, logging losses and alignment factors."""
    data = adapt_split(split)
    data.validate()
    order = [s.stage_id for s in stages]
    if order != sorted(order):
        raise ValueError(f"stages must be ordered by stage_id, got {order}")
    anchor_group = f"enc_{state.task.anchor.spec.name}"
    for stage in stages:
        if stage.stage_id >= 2 and anchor_group not in stage.frozen:
            raise ValueError(
                f"stage {stage.stage_id} must freeze the anchor encoder {anchor_group}")
        if stage.stage_id == 3 and not stage.pseudo_pairs:
            raise ValueError("stage 3 must enable the pseudo-pair objective")
    for stage in stages:
        for adam_state in state.adam.values():
            adam_state.lr = stage.lr
        for i in range(stage.iterations):
            report = train_iteration(state, stage, data)
            if data.test and (state.iteration % monitor_every == 0
                              or i == stage.iterations - 1):
                state.last_alignment = monitor_alignment(state, data.test)
            if state.iteration % log_every == 0 or i == stage.iterations - 1:
                af = state.last_alignment
                state.history.append({
                    "iteration": state.iteration,
                    "stage": stage.stage_id,
                    "loss_total": report.total_value,
                    "loss_rgb": report.value("rgb_l2") + report.value("rgb_gan"),
                    "loss_seg": report.value("seg"),
                    "loss_depth": report.value("depth"),
                    "loss_lat": report.value("lat"),
                    "loss_pp": report.value("pp"),
                    "af_rs": af.af_rs, "af_rd": af.af_rd, "af_ds": af.af_ds,
                })
    return state


def write_metric_log(history, path):
    """CSV metric log with a fixed column order."""
    lines = [",".join(METRIC_COLUMNS)]
    for row in history:
        cells = []
        for col in METRIC_COLUMNS:
            v = row[col]
            cells.append(str(v) if isinstance(v, int) else f"{v:.6g}")
        lines.append(",".join(cells))
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# inference helpers
# ---------------------------------------------------------------------------

def translate_batch(state: TrainState, src, dst, raws):
    """Run raw source samples through src-encoder + dst-decoder, no noise."""
    mods = {m.spec.name: m for m in state.task.all}
    batch, _ = _stack(mods[src], raws)
    with no_grad():
        code = encode(state.encoders[src], batch, noise_sigma=0.0, training=False)
        out = decode(state.decoders[dst], code, training=False)
    return out.data


def fused_translate_batch(state: TrainState, src_pair, dst, raws_a, raws_b,
                          alpha=0.2, indices_from=None):
    """Decode a weighted blend of two source codes: (1-alpha)*a + alpha*b."""
    mods = {m.spec.name: m for m in state.task.all}
    name_a, name_b = src_pair
    batch_a, _ = _stack(mods[name_a], raws_a)
    batch_b, _ = _stack(mods[name_b], raws_b)
    with no_grad():
        code_a = encode(state.encoders[name_a], batch_a, noise_sigma=0.0,
                        training=False)
        code_b = encode(state.encoders[name_b], batch_b, noise_sigma=0.0,
                        training=False)
        fused = fuse_latents(code_a, code_b, alpha,
                             indices_from=indices_from or name_b)
        out = decode(state.decoders[dst], fused, training=False)
    return out.data


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"MMNC"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, state: TrainState):
    """Binary snapshot: named f32 entries + a json blob for scalars/rng."""
    arrays = state.arrays()
    body = bytearray()
    body += struct.pack("<Q", len(arrays))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        encoded = name.encode("utf-8")
        body += struct.pack("<H", len(encoded)) + encoded
        body += struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes()
    blob = json.dumps({
        "iteration": state.iteration,
        "rng_state": state.rng.bit_generator.state,
        "adam": {g: {"lr": a.lr, "t": a.t} for g, a in state.adam.items()},
        "history": state.history,
    }, sort_keys=True).encode("utf-8")
    body += struct.pack("<Q", len(blob)) + blob
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(body)
        f.write(struct.pack("<I", zlib.crc32(bytes(body))))


def load_checkpoint(path, state: TrainState) -> TrainState:
    """Restore a snapshot in place; the state must match the saved shapes."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {blob[:4]!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    body = blob[8:-4]
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != stored_crc:
        raise CheckpointError("checkpoint CRC mismatch; file is corrupt")
    arrays = state.arrays()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(body):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        chunk = body[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<Q", take(8, "entry count"))
    seen = set()
    for i in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"entry {i} name length"))
        name = take(name_len, f"entry {i} name").decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, f"tensor '{name}' rank"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"tensor '{name}' dims"))
        payload = take(4 * int(np.prod(shape, dtype=np.int64)),
                       f"tensor '{name}' payload")
        if name not in arrays:
            raise CheckpointError(f"checkpoint contains unknown tensor '{name}'")
        target = arrays[name]
        if tuple(shape) != target.shape:
            raise CheckpointError(
                f"tensor '{name}' has shape {tuple(shape)}, expected {target.shape}")
        target[...] = np.frombuffer(payload, dtype="<f4").reshape(shape)
        seen.add(name)
    missing = sorted(set(arrays) - seen)
    if missing:
        raise CheckpointError(f"checkpoint is missing tensor '{missing[0]}'")
    (blob_len,) = struct.unpack("<Q", take(8, "trailer length"))
    trailer = json.loads(take(blob_len, "trailer blob").decode("utf-8"))
    state.iteration = trailer["iteration"]
    state.rng.bit_generator.state = trailer["rng_state"]
    for g, vals in trailer["adam"].items():
        state.adam[g].lr = vals["lr"]
        state.adam[g].t = vals["t"]
    state.history = trailer["history"]
    return state
