"""Config-driven experiment runner: scenario presets, seeded deterministic
training loops, JSONL metrics, and savings reports against a baseline."""

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from . import energy as energy_mod
from . import model as model_mod
from . import optim, slu
from .errors import ConfigError, NumericError

SCENARIOS = ("smb", "smd", "slu", "psg", "e2train")


@dataclass
class RunConfig:
    scenario: str = "smb"
    seed: int = 0
    # model
    blocks: int = 4
    width: int = 8
    stem_stride: int = 2
    num_classes: int = 10
    # data
    data_source: str = "synthetic"
    data_path: str | None = None
    train_size: int = 5000
    eval_size: int = 1000
    batch_size: int = 16
    difficulty: float = 2.0
    subset_per_class: int | None = None
    augment: bool | None = None  # default: on for cifar10, off for synthetic
    # training
    iterations: int = 4000
    finetune_iterations: int | None = None
    eval_every: int = 200
    ledger_every: int = 50
    decay_points: tuple = (0.5, 0.75)
    decay_factor: float = 0.1
    # optimizer
    optim_kind: str = "sgd"
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    psg_beta: float = 0.05
    swa: str = "auto"  # auto: on iff psg; else on/off
    swa_start: int | None = None  # default: last decay step
    # techniques
    smd_enabled: bool = False
    smd_p: float = 0.5
    smd_energy_ratio: float = 0.67
    slu_enabled: bool = False
    slu_alpha: float = 0.05
    slu_eval_threshold: float = 0.5
    slu_gate_lr_scale: float = 0.3
    psg_enabled: bool = False
    # quantization formats
    act_bits: int = 8
    act_msb_bits: int = 4
    grad_bits: int = 16
    grad_msb_bits: int = 10
    # energy model
    energy_model: str = "quadratic"
    # snapshot capture for the bound verifier
    snapshot_layers: tuple = ()
    snapshot_every: int = 0


KEY_MAP = {
    "run.scenario": "scenario",
    "train.seed": "seed",
    "model.blocks": "blocks",
    "model.width": "width",
    "model.stem_stride": "stem_stride",
    "model.classes": "num_classes",
    "data.source": "data_source",
    "data.path": "data_path",
    "data.n": "train_size",
    "data.eval_n": "eval_size",
    "data.batch_size": "batch_size",
    "data.difficulty": "difficulty",
    "data.subset_per_class": "subset_per_class",
    "data.augment": "augment",
    "train.iterations": "iterations",
    "train.finetune_iterations": "finetune_iterations",
    "train.eval_every": "eval_every",
    "train.ledger_every": "ledger_every",
    "train.decay_points": "decay_points",
    "train.decay_factor": "decay_factor",
    "optim.kind": "optim_kind",
    "optim.lr": "lr",
    "optim.momentum": "momentum",
    "optim.wd": "weight_decay",
    "optim.beta": "psg_beta",
    "optim.swa": "swa",
    "optim.swa_start": "swa_start",
    "smd.enabled": "smd_enabled",
    "smd.p": "smd_p",
    "smd.energy_ratio": "smd_energy_ratio",
    "slu.enabled": "slu_enabled",
    "slu.alpha": "slu_alpha",
    "slu.eval_threshold": "slu_eval_threshold",
    "slu.gate_lr_scale": "slu_gate_lr_scale",
    "psg.enabled": "psg_enabled",
    "quant.act_bits": "act_bits",
    "quant.act_msb_bits": "act_msb_bits",
    "quant.grad_bits": "grad_bits",
    "quant.grad_msb_bits": "grad_msb_bits",
    "energy.model": "energy_model",
    "snapshot.layers": "snapshot_layers",
    "snapshot.every": "snapshot_every",
}
FIELD_TO_KEY = {v: k for k, v in KEY_MAP.items()}

SCENARIO_PRESETS = {
    "smb": {},
    "smd": {"smd_enabled": True},
    "slu": {"slu_enabled": True},
    "psg": {"psg_enabled": True, "optim_kind": "psg", "lr": 0.03, "weight_decay": 5e-4},
    "e2train": {
        "smd_enabled": True,
        "slu_enabled": True,
        "psg_enabled": True,
        "optim_kind": "psg",
        "lr": 0.03,
        "weight_decay": 5e-4,
        "slu_alpha": 0.02,  # sign-update runs tolerate less gate pressure
    },
}


def _parse_value(field_obj, raw):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    t = field_obj.type
    typ = t if isinstance(t, str) else (t.__name__ if isinstance(t, type) else str(t))
    if typ in ("bool", "bool | None"):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"cannot parse bool from {raw!r}")
    if typ in ("int", "int | None"):
        return int(raw)
    if typ == "float":
        return float(raw)
    if typ == "tuple":
        if raw == "":
            return ()
        parts = [p for p in raw.split(",") if p.strip() != ""]
        nums = [float(p) if "." in p else int(p) for p in parts]
        return tuple(nums)
    return raw


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config_file(path):
    """Read `key = value` lines with dotted keys into a dict."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in KEY_MAP:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = raw
    return out


def make_config(scenario=None, config_file=None, overrides=None, **direct):
    """Scenario preset, then file values, then overrides, then direct kwargs."""
    values = {}
    if scenario is not None:
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}; valid: {SCENARIOS}")
        values["scenario"] = scenario
        values.update(SCENARIO_PRESETS[scenario])
    raw_items = {}
    if config_file is not None:
        raw_items.update(load_config_file(config_file))
    if overrides:
        for key, raw in overrides.items():
            if key not in KEY_MAP:
                raise ConfigError(f"unknown config key {key!r}")
            raw_items[key] = raw
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    for key, raw in raw_items.items():
        name = KEY_MAP[key]
        values[name] = _parse_value(fields[name], raw) if isinstance(raw, str) else raw
    values.update(direct)
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def replace_config(cfg, **kw):
    return dataclasses.replace(cfg, **kw)


def config_to_text(cfg):
    lines = []
    for key in sorted(KEY_MAP):
        lines.append(f"{key} = {_format_value(getattr(cfg, KEY_MAP[key]))}")
    return "\n".join(lines) + "\n"


def validate_config(cfg):
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}")
    if cfg.iterations < 0:
        raise ConfigError("train.iterations must be >= 0")
    if cfg.batch_size < 1:
        raise ConfigError("data.batch_size must be >= 1")
    if cfg.optim_kind not in ("sgd", "signsgd", "psg"):
        raise ConfigError(f"unknown optimizer {cfg.optim_kind!r}")
    if not 0.0 < cfg.lr:
        raise ConfigError("optim.lr must be > 0")
    if cfg.psg_enabled and not 0.0 < cfg.psg_beta < 1.0:
        raise ConfigError("optim.beta must be in (0, 1)")
    if cfg.psg_enabled != (cfg.optim_kind == "psg"):
        raise ConfigError("psg.enabled and optim.kind=psg must be set together")
    if cfg.smd_enabled and not 0.0 <= cfg.smd_p < 1.0:
        raise ConfigError("smd.p must be in [0, 1) for a finite schedule")
    if cfg.slu_alpha < 0:
        raise ConfigError("slu.alpha must be >= 0")
    if cfg.energy_model not in energy_mod.ENERGY_MODELS:
        raise ConfigError(f"unknown energy model {cfg.energy_model!r}")
    pts = cfg.decay_points
    if any(not 0.0 < p < 1.0 for p in pts) or list(pts) != sorted(set(pts)):
        raise ConfigError("train.decay_points must be strictly increasing fractions in (0, 1)")
    if cfg.data_source not in ("synthetic", "cifar10"):
        raise ConfigError(f"unknown data source {cfg.data_source!r}")
    if cfg.data_source == "cifar10" and cfg.data_path is None:
        raise ConfigError("data.path required for cifar10")


@dataclass
class RunResult:
    out_dir: str
    scenario: str
    seed: int
    scheduled_steps: int
    processed_steps: int
    final_acc: float
    flops: int
    energy: float
    mean_kept_ratio: float
    mean_predicted_fraction: float
    kept_ratio_steps: list = field(default_factory=list, repr=False)
    predicted_fraction_steps: list = field(default_factory=list, repr=False)
    eval_history: list = field(default_factory=list, repr=False)
    model: object = field(default=None, repr=False)
    gate: object = field(default=None, repr=False)


def build_datasets(cfg):
    if cfg.data_source == "synthetic":
        pool = data_mod.synthetic_dataset(
            seed=cfg.seed, n=cfg.train_size + cfg.eval_size,
            classes=cfg.num_classes, difficulty=cfg.difficulty,
        )
        train = data_mod.Dataset(
            images=pool.images[: cfg.train_size], labels=pool.labels[: cfg.train_size],
            num_classes=pool.num_classes, mean=pool.mean, std=pool.std,
        )
        evalset = data_mod.Dataset(
            images=pool.images[cfg.train_size :], labels=pool.labels[cfg.train_size :],
            num_classes=pool.num_classes, mean=pool.mean, std=pool.std,
        )
        return train, evalset
    train = data_mod.load_cifar10(cfg.data_path, cfg.subset_per_class)
    test_path = os.path.join(cfg.data_path, "test_batch.bin")
    if os.path.isfile(test_path):
        evalset = data_mod.load_cifar10(test_path, cfg.subset_per_class,
                                        norm_stats=(train.mean, train.std))
    else:
        n_eval = max(1, len(train) // 10)
        evalset = data_mod.Dataset(
            images=train.images[-n_eval:], labels=train.labels[-n_eval:],
            num_classes=train.num_classes, mean=train.mean, std=train.std,
        )
    return train, evalset


def lr_at(cfg, step, decay_steps):
    k = sum(1 for d in decay_steps if step >= d)
    return cfg.lr * cfg.decay_factor ** k


def deterministic_gate_fn(gate, threshold):
    """Fresh eval-mode gating closure (state resets per call batch)."""
    if gate is None:
        return None
    state = {"s": gate.init_state()}

    def gate_fn(i, h):
        if i == 0:
            state["s"] = gate.init_state()
        decision, state["s"], _ = slu.gate_forward(
            h, gate, state["s"], block_index=i, mode="deterministic")
        return decision.prob >= threshold

    return gate_fn


def evaluate(net, gate, dataset, cfg, batch=250):
    correct = 0
    for start in range(0, len(dataset), batch):
        xb = dataset.images[start : start + batch]
        yb = dataset.labels[start : start + batch]
        gate_fn = deterministic_gate_fn(gate, cfg.slu_eval_threshold)
        logits = net.forward(xb, gates=gate_fn, train=False)
        correct += int(np.sum(np.argmax(logits, axis=1) == yb))
    return correct / len(dataset)


def run(cfg: RunConfig, out_dir, net=None, gate=None, train_set=None,
        eval_set=None, trainable="all") -> RunResult:
    """Execute one training run; deterministic given (cfg, provided nets)."""
    validate_config(cfg)
    os.makedirs(out_dir, exist_ok=True)

    streams = np.random.SeedSequence(cfg.seed).spawn(6)
    init_rng = np.random.default_rng(streams[0])
    data_seed, smd_seed = streams[1], streams[2]
    gate_rng = np.random.default_rng(streams[3])
    aug_rng = np.random.default_rng(streams[4])

    if train_set is None or eval_set is None:
        train_set, eval_set = build_datasets(cfg)
    if net is None:
        net = model_mod.GatedConvNet(
            in_shape=train_set.images.shape[1:], num_blocks=cfg.blocks,
            width=cfg.width, num_classes=train_set.num_classes,
            stem_stride=cfg.stem_stride, rng=init_rng,
        )
    if cfg.slu_enabled and gate is None:
        gate = slu.GateNetwork(net.width, rng=init_rng)
    if not cfg.slu_enabled:
        gate = None

    ledger = energy_mod.EnergyLedger(model=cfg.energy_model)
    fwd_bits = cfg.act_bits if cfg.psg_enabled else 32
    bwd_bits = cfg.grad_bits if cfg.psg_enabled else 32

    if cfg.smd_enabled:
        scheduled = int(round(cfg.iterations * cfg.smd_energy_ratio / (1.0 - cfg.smd_p)))
    else:
        scheduled = cfg.iterations
    decay_steps = [int(f * scheduled) for f in cfg.decay_points]
    if cfg.smd_enabled:
        keep_mask = data_mod.smd_schedule(scheduled, cfg.smd_p, smd_seed).keep_mask()
    else:
        keep_mask = np.ones(scheduled, dtype=bool)

    if trainable == "head":
        train_params = net.fc.params()
    else:
        train_params = net.params()
    if cfg.optim_kind == "sgd":
        optimizer = optim.SGD(train_params, cfg.momentum, cfg.weight_decay)
    elif cfg.optim_kind == "signsgd":
        optimizer = optim.SignSGD(train_params, cfg.weight_decay)
    else:
        formats = optim.PsgFormats(cfg.act_bits, cfg.act_msb_bits,
                                   cfg.grad_bits, cfg.grad_msb_bits)
        optimizer = optim.PSG(train_params, formats, cfg.psg_beta,
                              cfg.weight_decay, ledger, weight_bits=cfg.act_bits)
    gate_opt = optim.SGD(gate.params(), momentum=0.9, weight_decay=0.0) if gate else None

    swa_on = cfg.psg_enabled if cfg.swa == "auto" else cfg.swa == "on"
    swa_start = cfg.swa_start if cfg.swa_start is not None else (
        decay_steps[-1] if decay_steps else 0)
    gate_freeze_step = decay_steps[-1] if decay_steps else scheduled
    averager = optim.SwaAverager(train_params) if swa_on else None

    per_block_flops = net.per_block_flops(cfg.batch_size)
    do_augment = cfg.augment if cfg.augment is not None else cfg.data_source == "cifar10"
    stream = data_mod.BatchStream(train_set, cfg.batch_size, data_seed)
    snap_dir = os.path.join(out_dir, "snapshots")
    if cfg.snapshot_every > 0 and cfg.snapshot_layers:
        os.makedirs(snap_dir, exist_ok=True)

    kept_ratios, pred_fracs, eval_history = [], [], []
    processed = 0

    with open(os.path.join(out_dir, "metrics.jsonl"), "w") as metrics:

        def emit(record):
            metrics.write(json.dumps(record) + "\n")
            metrics.flush()

        for s in range(scheduled):
            lr = lr_at(cfg, s, decay_steps)
            xb, yb = stream.next_batch()
            if keep_mask[s]:
                if do_augment:
                    xb = data_mod.augment_batch(xb, aug_rng)
                net.zero_grads()

                decisions, caches = [], []
                gates_arg = None
                if gate is not None:
                    gate.zero_grads()
                    gstate = {"s": gate.init_state()}
                    # explore by sampling until the last lr decay, then run
                    # the thresholded gates so weights settle into the
                    # architecture evaluation will see
                    gmode = "sample" if s < gate_freeze_step else "deterministic"

                    def gates_arg(i, h, _st=gstate, _mode=gmode):
                        decision, _st["s"], cache = slu.gate_forward(
                            h, gate, _st["s"], block_index=i, mode=_mode,
                            rng=gate_rng, ledger=ledger)
                        decisions.append(decision)
                        caches.append(cache)
                        return decision.keep

                logits = net.forward(xb, gates=gates_arg, ledger=ledger,
                                     bits=fwd_bits, train=True)
                loss, g_logits = model_mod.softmax_cross_entropy(logits, yb)
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite loss at scheduled step {s}")
                accumulate = cfg.optim_kind != "psg"
                if gate is not None:
                    cgrad = slu.complexity_grad_wrt_probs(per_block_flops, cfg.slu_alpha)
                    slu.joint_backward(net, gate, g_logits, caches, cgrad,
                                       ledger=ledger, bits=bwd_bits,
                                       accumulate_weight_grad=accumulate)
                else:
                    net.backward(g_logits, ledger=ledger, bits=bwd_bits,
                                 accumulate_weight_grad=accumulate,
                                 head_only=trainable == "head")

                record = {"step": processed, "scheduled_step": s,
                          "lr": lr, "loss": loss}
                if gate is not None:
                    mask = slu.select_layers(decisions, len(net.blocks))
                    parts = slu.slu_total_loss(loss, mask, per_block_flops, cfg.slu_alpha)
                    # gates keep their own base rate (the model may be on
                    # a small sign-update lr) but follow the decay schedule
                    gate_opt.step(0.1 * cfg.slu_gate_lr_scale * (lr / cfg.lr),
                                  ledger=ledger, bits=32)
                    kept_ratios.append(float(np.mean(mask)))
                    record["kept_mask"] = "".join("1" if k else "0" for k in mask)
                    record["complexity_cost"] = parts.complexity_cost

                if cfg.optim_kind == "psg":
                    stats = optimizer.step(lr)
                    pred_fracs.append(stats.predicted_fraction)
                    record["psg_predicted_fraction"] = stats.predicted_fraction
                    record["psg_flips"] = stats.flip_count
                else:
                    optimizer.step(lr, ledger=ledger, bits=32)

                if averager is not None and s >= swa_start:
                    averager.update()

                if (cfg.snapshot_every > 0 and cfg.snapshot_layers
                        and processed % cfg.snapshot_every == 0):
                    convs = net.conv_layers()
                    for li in cfg.snapshot_layers:
                        conv = convs[li]
                        if conv.cached_grad_output is None:
                            continue  # block skipped this step
                        try:
                            np.savez(
                                os.path.join(snap_dir, f"step{processed:06d}_layer{li}.npz"),
                                x=conv.cached_input, gy=conv.cached_grad_output,
                                stride=conv.stride, pad=conv.pad,
                            )
                        except OSError as exc:
                            raise OSError(
                                f"snapshot write failed at step {processed}, "
                                f"layer {li}: {exc}") from exc
                emit(record)
                processed += 1

            if (s + 1) % cfg.eval_every == 0:
                ledger.pause()
                acc = evaluate(net, gate, eval_set, cfg)
                ledger.resume()
                eval_history.append((s, acc))
                emit({"scheduled_step": s, "eval_acc": acc})
            if (s + 1) % cfg.ledger_every == 0:
                emit({"scheduled_step": s, "ledger": ledger.snapshot()})

        if averager is not None and averager.n > 0:
            averager.load_into_params()
        if (averager is not None and averager.n > 0) or (gate is not None and processed > 0):
            # refresh batchnorm running stats on the final weights, under the
            # same deterministic gating evaluation will use (training-time
            # stats reflect sampled masks / pre-averaging weights)
            for _ in range(20):
                xb, yb = stream.next_batch()
                net.forward(xb, gates=deterministic_gate_fn(gate, cfg.slu_eval_threshold),
                            ledger=ledger, bits=fwd_bits, train=True)

        ledger.pause()
        final_acc = evaluate(net, gate, eval_set, cfg)
        ledger.resume()
        eval_history.append((scheduled, final_acc))
        emit({"scheduled_step": scheduled, "eval_acc": final_acc})

    snap = ledger.snapshot()
    result = RunResult(
        out_dir=str(out_dir),
        scenario=cfg.scenario,
        seed=cfg.seed,
        scheduled_steps=scheduled,
        processed_steps=processed,
        final_acc=final_acc,
        flops=snap["flops"],
        energy=snap["energy"],
        mean_kept_ratio=float(np.mean(kept_ratios)) if kept_ratios else 1.0,
        mean_predicted_fraction=float(np.mean(pred_fracs)) if pred_fracs else 1.0,
        kept_ratio_steps=kept_ratios,
        predicted_fraction_steps=pred_fracs,
        eval_history=eval_history,
        model=net,
        gate=gate,
    )
    ledger.save(os.path.join(out_dir, "ledger.json"))
    with open(os.path.join(out_dir, "effective_config"), "w") as fh:
        fh.write(config_to_text(cfg))
    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write("scenario,seed,scheduled_steps,processed_steps,final_acc,flops,"
                 "energy,mean_kept_ratio,mean_predicted_fraction\n")
        fh.write(f"{cfg.scenario},{cfg.seed},{scheduled},{processed},"
                 f"{final_acc!r},{snap['flops']},{snap['energy']!r},"
                 f"{result.mean_kept_ratio!r},{result.mean_predicted_fraction!r}\n")
    return result


def read_run(out_dir):
    """Summary row + ledger totals of a completed run directory."""
    summary_path = os.path.join(out_dir, "summary.csv")
    if not os.path.isfile(summary_path):
        raise ConfigError(f"{out_dir} has no summary.csv (incomplete run?)")
    with open(summary_path) as fh:
        header = fh.readline().strip().split(",")
        values = fh.readline().strip().split(",")
    row = dict(zip(header, values))
    with open(os.path.join(out_dir, "ledger.json")) as fh:
        ledger = json.load(fh)
    return {"summary": row, "ledger": ledger}


COMPARE_HEADER = ["Method", "Computational Savings (FLOPs)", "Energy Savings",
                  "Accuracy (top-1)"]


def compare(run_dirs, baseline_dir, out_path=None):
    """Savings table for runs measured against one baseline run."""
    if not run_dirs:
        raise ConfigError("need at least one run to compare")
    base = read_run(baseline_dir)
    rows = []
    for rd in run_dirs:
        info = read_run(rd)
        rep = energy_mod.savings_report(info["ledger"], base["ledger"])
        rows.append([
            info["summary"]["scenario"],
            f"{100 * rep.computational_savings:.2f}%",
            f"{100 * rep.energy_savings:.2f}%",
            f"{100 * float(info['summary']['final_acc']):.2f}%",
        ])
    text = ",".join(COMPARE_HEADER) + "\n"
    text += "\n".join(",".join(r) for r in rows) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    return rows, text


def finetune_split(cfg: RunConfig, out_dir):
    """Pretrain on half the data, then compare two fine-tuning options on
    the other half: (1) head-only standard training, (2) full E2-style
    training (drop + gate + sign-predict). Returns the report dict."""
    import copy

    os.makedirs(out_dir, exist_ok=True)
    train_set, eval_set = build_datasets(cfg)
    half_a, half_b = data_mod.stratified_split(train_set, seed=cfg.seed + 7919)

    ft_iters = (cfg.finetune_iterations if cfg.finetune_iterations is not None
                else cfg.iterations // 2)
    pre_cfg = replace_config(
        cfg, scenario="smb", smd_enabled=False, slu_enabled=False,
        psg_enabled=False, optim_kind="sgd", lr=0.1, weight_decay=1e-4,
    )
    pre = run(pre_cfg, os.path.join(out_dir, "pretrain"),
              train_set=half_a, eval_set=eval_set)

    opt1_cfg = replace_config(pre_cfg, iterations=ft_iters, seed=cfg.seed + 1)
    opt1 = run(opt1_cfg, os.path.join(out_dir, "opt1_head"),
               net=copy.deepcopy(pre.model), train_set=half_b,
               eval_set=eval_set, trainable="head")

    opt2_cfg = make_config(scenario="e2train", seed=cfg.seed + 1)
    opt2_cfg = replace_config(
        opt2_cfg, blocks=cfg.blocks, width=cfg.width, stem_stride=cfg.stem_stride,
        num_classes=cfg.num_classes, data_source=cfg.data_source,
        data_path=cfg.data_path, train_size=cfg.train_size,
        eval_size=cfg.eval_size, batch_size=cfg.batch_size,
        difficulty=cfg.difficulty, iterations=ft_iters,
        smd_energy_ratio=cfg.smd_energy_ratio, slu_alpha=cfg.slu_alpha,
    )
    opt2 = run(opt2_cfg, os.path.join(out_dir, "opt2_e2train"),
               net=copy.deepcopy(pre.model), train_set=half_b, eval_set=eval_set)

    report = {
        "pretrain_acc": pre.final_acc,
        "opt1_acc": opt1.final_acc,
        "opt2_acc": opt2.final_acc,
        "opt1_delta_acc": opt1.final_acc - pre.final_acc,
        "opt2_delta_acc": opt2.final_acc - pre.final_acc,
        "opt1_flops": opt1.flops,
        "opt2_flops": opt2.flops,
        "opt1_energy": opt1.energy,
        "opt2_energy": opt2.energy,
        "opt2_extra_energy_savings": (
            1.0 - opt2.energy / opt1.energy if opt1.energy else 0.0
        ),
    }
    with open(os.path.join(out_dir, "finetune_report.json"), "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return report
