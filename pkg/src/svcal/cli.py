"""Command-line front end: one subcommand per backend stage.

A typical run::

    svcal synth --seed 0 --out corpus.tsv
    svcal trials --corpus corpus.tsv --seed 1 --out trials.txt
    svcal embed --corpus corpus.tsv --out emb.bin
    svcal cmf --corpus corpus.tsv --out cmf.tsv
    svcal score --trials trials.txt --embeddings emb.bin --cmf-map cmf.tsv --out cmf.scores
    svcal asnorm --scores cmf.scores --embeddings emb.bin --corpus corpus.tsv \\
        --cohort-speakers cohort.txt --cmf-map cmf.tsv --stats-out stats.tsv --out norm.scores
    svcal eval --trials trials.txt --scores norm.scores
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import formats
from .asnorm import DEFAULT_TOP_K, asnorm_table, build_cohort, compute_stats_map, scale_stats
from .errors import BackendError, TrialMismatch
from .metrics import DEFAULT_P_TARGETS, DcfParams, FusionSpec, eer, fuse, min_dcf
from .parallel import THREADS_ENV
from .pipeline import ablation_corpus, embed_corpus, sample_eval_trials
from .qmf import (
    FRAMES_PER_SECOND,
    FEATURE_NAMES,
    LINEAR_FEATURE_NAMES,
    LrConfig,
    SamplerSpec,
    apply_qmf,
    feature_matrix,
    parse_clip_id,
    read_model,
    sample_trials,
    train_lr,
    write_model,
)
from .scoring import ScoreTable, score_trials
from .segmentation import EVAL_WINDOW, MIN_SEGMENTS, MIN_WINDOW
from .synth import EmbedConfig, SynthSpec, corpus_metadata

PROG = "svcal"

FORMATS_HELP = """\
file formats:
  corpus TSV       utterance_id<TAB>speaker_id<TAB>duration_s; `synth` adds a
                   leading `# synth key=value ...` line so frames can be
                   regenerated by `embed` and `cmf`
  trial list       `label enroll_id test_id` (label 0/1, 1 = same speaker)
                   or unlabeled `enroll_id test_id`; ids of the form
                   `<utt>#clip<frames>` name the first <frames> frames of <utt>
  score file       `enroll_id test_id score`, score with 6 decimals
  embedding store  binary: b"EMB1", u32 dim, u32 count, then per record u16
                   id length, UTF-8 id, dim little-endian f32 values;
                   or TSV `id<TAB>v1<TAB>...<TAB>vD` for .tsv/.txt paths
  CMF map          utterance_id<TAB>cmf
  cohort stats     utterance_id<TAB>top-K mean<TAB>top-K std
  speaker list     one speaker id per line
  QMF model        `QMF1`, feature count, `name weight mean std` per feature,
                   `bias value`
  blank lines and lines starting with `#` are ignored in text inputs

exit status: 0 success, 1 data error, 2 usage error.
environment: %s overrides the default thread count.
""" % THREADS_ENV


class UsageError(Exception):
    """Bad flags or paths, reported with exit code 2."""


# ---------------------------------------------------------------------------
# argument types


def _input_file(text: str) -> Path:
    p = Path(text)
    if not p.is_file():
        raise argparse.ArgumentTypeError("no such file: %s" % text)
    return p


def _output_file(text: str) -> Path:
    p = Path(text)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise argparse.ArgumentTypeError("output directory does not exist: %s" % parent)
    if p.is_dir():
        raise argparse.ArgumentTypeError("output path is a directory: %s" % text)
    return p


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("not an integer: %r" % text) from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive: %r" % text)
    return v


def _probability(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("not a number: %r" % text) from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("must lie in (0, 1): %r" % text)
    return v


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        n = 0
    if n < 1:
        raise UsageError("%s must be a positive integer, got %r" % (THREADS_ENV, value))
    return n


# ---------------------------------------------------------------------------
# shared loading helpers


def _durations(corpus_path: Path) -> dict:
    return {u: d for u, _, d in formats.read_corpus(corpus_path)}


def _duration_of(utt: str, durations: dict) -> float:
    clip = parse_clip_id(utt)
    if clip is not None and utt not in durations:
        return clip[1] / FRAMES_PER_SECOND
    return durations.get(utt, 0.0)


def _with_durations(ids, durations: dict) -> dict:
    return {u: _duration_of(u, durations) for u in ids}


def _clip_requests(trial_paths, known: set) -> dict:
    clips = {}
    for path in trial_paths or ():
        for t in formats.read_trials(path):
            for utt in (t.enroll_id, t.test_id):
                clip = parse_clip_id(utt)
                if clip is None or utt in clips:
                    continue
                if clip[0] not in known:
                    raise BackendError("%s: clip %r refers to an unknown utterance" % (path, utt))
                clips[utt] = clip
    return clips


def _score_table(path: Path, column: str) -> ScoreTable:
    trials, scores = formats.read_scores(path)
    return ScoreTable(trials, {column: scores})


def _aligned(table: ScoreTable, trials: list, what: str) -> ScoreTable:
    if len(trials) != len(table) or not ScoreTable(trials).same_trials(table):
        raise TrialMismatch("%s does not list the same trials in the same order" % what)
    return ScoreTable(trials, dict(table.columns))


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> str:
    base = ablation_corpus(args.seed) if args.ablation else SynthSpec(seed=args.seed)
    overrides = {
        "n_speakers": args.n_speakers,
        "utts_per_speaker": args.utts_per_speaker,
        "dim": args.dim,
        "speaker_scale": args.speaker_scale,
        "noise_scale": args.noise_scale,
        "latent_dim": args.latent_dim,
        "frame_noise": args.frame_noise,
        "drift": args.drift,
        "drift_frames": args.drift_frames,
        "quality_spread": args.quality_spread,
        "n_noise_types": args.noise_types,
        "noise_type_scale": args.noise_type_scale,
        "home_noise_prob": args.home_noise_prob,
    }
    lo, hi = base.frames_range
    if args.min_frames is not None:
        lo = args.min_frames
    if args.max_frames is not None:
        hi = args.max_frames
    values = {k: v for k, v in overrides.items() if v is not None}
    spec = SynthSpec(**{**_spec_dict(base), **values, "frames_range": (lo, hi)})
    corpus = corpus_metadata(spec)
    formats.write_corpus(args.out, corpus, spec)
    return "synth: %d utterances of %d speakers -> %s" % (len(corpus), spec.n_speakers, args.out)


def _spec_dict(spec: SynthSpec) -> dict:
    return {name: getattr(spec, name) for name in spec.__dataclass_fields__}


def cmd_trials(args) -> str:
    corpus = formats.read_corpus(args.corpus)
    if args.speakers is not None:
        keep = set(formats.read_id_list(args.speakers))
        corpus = [m for m in corpus if m[1] in keep]
    if args.mode == "eval":
        trials = sample_eval_trials(corpus, args.n_trials, args.target_ratio, args.seed)
    else:
        spec = SamplerSpec(
            long_threshold_s=args.long_threshold,
            short_clip_range_s=(args.clip_min, args.clip_max),
            pairs_per_condition=args.pairs_per_condition,
            target_ratio=args.target_ratio,
        )
        trials = sample_trials(corpus, spec, args.seed)
    formats.write_trials(args.out, trials)
    n_tar = sum(t.is_target for t in trials)
    return "trials: %d %s trials (%d target) -> %s" % (len(trials), args.mode, n_tar, args.out)


def _embed_config(args) -> EmbedConfig:
    return EmbedConfig(
        projection_seed=args.projection_seed,
        dim_out=args.dim_out,
        window=args.window,
        window_min=args.min_window,
        min_segments=args.min_segments,
    )


def _embed_all(args):
    spec = formats.read_corpus_spec(args.corpus)
    known = {u for u, _, _ in formats.read_corpus(args.corpus)}
    clips = _clip_requests(args.trials, known)
    return embed_corpus(spec, _embed_config(args), clips)


def cmd_embed(args) -> str:
    store, _, _ = _embed_all(args)
    if Path(args.out).suffix.lower() in formats.TSV_SUFFIXES:
        formats.write_store_tsv(args.out, store)
    else:
        formats.write_store(args.out, store)
    return "embed: %d embeddings of dim %d -> %s" % (len(store), store.dim or 0, args.out)


def cmd_cmf(args) -> str:
    _, cmfs, _ = _embed_all(args)
    formats.write_value_map(args.out, cmfs)
    vals = np.array(list(cmfs.values()))
    return "cmf: %d utterances, CMF min %.4f mean %.4f -> %s" % (len(vals), vals.min(), vals.mean(), args.out)


def cmd_score(args) -> str:
    trials = formats.read_trials(args.trials)
    store = formats.load_store(args.embeddings)
    cmfs = formats.read_value_map(args.cmf_map) if args.cmf_map is not None else None
    table = score_trials(trials, store, cmfs, threads=_threads(args))
    column = "cmf" if cmfs is not None else "raw"
    formats.write_scores(args.out, trials, table[column])
    return "score: %d trials (%s) -> %s" % (len(trials), column, args.out)


def cmd_asnorm(args) -> str:
    table = _score_table(args.scores, "input")
    store = formats.load_store(args.embeddings)
    corpus = formats.read_corpus(args.corpus)
    cohort_speakers = set(formats.read_id_list(args.cohort_speakers))
    labeled = [(s, store[u]) for u, s, _ in corpus if s in cohort_speakers and u in store]
    cohort = build_cohort(labeled, args.top_k)
    ids = sorted({u for t in table.trials for u in (t.enroll_id, t.test_id)})
    stats = compute_stats_map(store, cohort, ids, threads=_threads(args))
    norm_stats = stats
    if args.cmf_map is not None:
        norm_stats = scale_stats(stats, formats.read_value_map(args.cmf_map))
    out = asnorm_table(table, norm_stats, "input")
    formats.write_scores(args.out, out.trials, out["asnorm"])
    if args.stats_out is not None:
        formats.write_stats(args.stats_out, stats)
    return "asnorm: %d trials, cohort of %d speakers, top-%d -> %s" % (
        len(out), len(cohort), args.top_k, args.out)


def _qmf_inputs(args, trials=None):
    table = _score_table(args.scores, "score")
    if trials is not None:
        table = _aligned(table, trials, str(args.scores))
    ids = {u for t in table.trials for u in (t.enroll_id, t.test_id)}
    durations = _with_durations(ids, _durations(args.corpus))
    store = formats.load_store(args.embeddings)
    stats = formats.read_stats(args.stats)
    return table, store, stats, durations


def cmd_qmf_train(args) -> str:
    trials = formats.read_trials(args.trials)
    if any(t.label is None for t in trials):
        raise BackendError("%s: QMF training needs a labeled trial list" % args.trials)
    table, store, stats, durations = _qmf_inputs(args, trials)
    log_transform = not args.linear
    x = feature_matrix(table, "score", store, stats, durations, log_transform)
    config = LrConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        l2_lambda=args.l2,
        seed=args.seed,
        prior=args.prior,
    )
    names = FEATURE_NAMES if log_transform else LINEAR_FEATURE_NAMES
    model = train_lr(x, table.labels().astype(float), config, names)
    write_model(args.out, model)
    return "qmf-train: %d trials, loss %.6f -> %.6f -> %s" % (
        len(table), model.loss_history[0], model.loss_history[-1], args.out)


def cmd_qmf_apply(args) -> str:
    model = read_model(args.model)
    table, store, stats, durations = _qmf_inputs(args)
    x = feature_matrix(table, "score", store, stats, durations, model.log_transform)
    scores = apply_qmf(model, x)
    formats.write_scores(args.out, table.trials, scores)
    return "qmf-apply: %d trials -> %s" % (len(table), args.out)


def cmd_fuse(args) -> str:
    tables = [_score_table(p, "asnorm") for p in args.scores]
    weights = args.weights if args.weights is not None else [1.0] * len(tables)
    if len(weights) != len(tables):
        raise UsageError("%d score files but %d weights" % (len(tables), len(weights)))
    spec = FusionSpec(tuple(str(p) for p in args.scores), tuple(weights))
    fused = fuse(tables, spec, "asnorm")
    formats.write_scores(args.out, fused.trials, fused["fused"])
    return "fuse: %d systems, %d trials -> %s" % (len(tables), len(fused), args.out)


def cmd_eval(args) -> str:
    trials = formats.read_trials(args.trials)
    if any(t.label is None for t in trials):
        raise BackendError("%s: evaluation needs a labeled trial list" % args.trials)
    table = _aligned(_score_table(args.scores, "score"), trials, str(args.scores))
    labels = table.labels()
    lines = ["EER(%%) %.4f" % (100.0 * eer(table["score"], labels))]
    for p in args.p_target or DEFAULT_P_TARGETS:
        lines.append("minDCF(p=%g) %.4f" % (p, min_dcf(table["score"], labels, DcfParams(p_target=p))))
    report = "\n".join(lines)
    if args.out is not None:
        Path(args.out).write_text(report + "\n", encoding="utf-8")
    return report


# ---------------------------------------------------------------------------
# parser


def _add_threads(p):
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: $%s or the CPU count); results do not depend on it"
                   % THREADS_ENV)


def _add_embed_flags(p):
    p.add_argument("--corpus", type=_input_file, required=True, help="corpus TSV written by `synth`")
    p.add_argument("--trials", type=_input_file, action="append",
                   help="trial list whose clip ids should be embedded too (repeatable)")
    p.add_argument("--window", type=_positive_int, default=EVAL_WINDOW,
                   help="segment window in frames (default %(default)s; 200 for the short profile)")
    p.add_argument("--min-window", type=_positive_int, default=MIN_WINDOW,
                   help="smallest window when adapting to short audio (default %(default)s)")
    p.add_argument("--min-segments", type=_positive_int, default=MIN_SEGMENTS,
                   help="segments wanted before the window stops shrinking (default %(default)s)")
    p.add_argument("--projection-seed", type=int, default=0, help="seed of the toy embedder projection")
    p.add_argument("--dim-out", type=_positive_int, default=64, help="embedding dimension")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Speaker-verification backend: scoring, CMF calibration, AS-Norm, QMF, fusion, metrics.",
        epilog=FORMATS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=FORMATS_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "Generate a synthetic corpus and write its corpus TSV.")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=_output_file, required=True)
    p.add_argument("--ablation", action="store_true",
                   help="start from the 200 x 20 noise regime used for the stage ablation")
    p.add_argument("--n-speakers", type=_positive_int)
    p.add_argument("--utts-per-speaker", type=_positive_int)
    p.add_argument("--dim", type=_positive_int)
    p.add_argument("--min-frames", type=_positive_int)
    p.add_argument("--max-frames", type=_positive_int)
    p.add_argument("--speaker-scale", type=float)
    p.add_argument("--noise-scale", type=float)
    p.add_argument("--latent-dim", type=_positive_int)
    p.add_argument("--frame-noise", type=float)
    p.add_argument("--drift", type=float)
    p.add_argument("--drift-frames", type=_positive_int)
    p.add_argument("--quality-spread", type=float)
    p.add_argument("--noise-types", type=_positive_int)
    p.add_argument("--noise-type-scale", type=float)
    p.add_argument("--home-noise-prob", type=float)

    p = add("trials", cmd_trials, "Sample a labeled trial list (evaluation or QMF training).")
    p.add_argument("--corpus", type=_input_file, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=_output_file, required=True)
    p.add_argument("--mode", choices=("eval", "qmf"), default="eval",
                   help="eval: whole-utterance pairs; qmf: duration-bucketed pairs with short clips")
    p.add_argument("--speakers", type=_input_file, help="restrict to the speakers in this list")
    p.add_argument("--n-trials", type=_positive_int, default=10000, help="eval mode trial count")
    p.add_argument("--target-ratio", type=_probability, default=0.5)
    p.add_argument("--pairs-per-condition", type=_positive_int, default=10000, help="qmf mode")
    p.add_argument("--long-threshold", type=float, default=5.0, help="qmf mode, seconds")
    p.add_argument("--clip-min", type=float, default=2.0, help="qmf mode, seconds")
    p.add_argument("--clip-max", type=float, default=5.0, help="qmf mode, seconds")

    p = add("embed", cmd_embed,
            "Embed every utterance (and requested clips) into an embedding store "
            "(TSV when --out ends in .tsv or .txt, binary otherwise).")
    _add_embed_flags(p)
    p.add_argument("--out", type=_output_file, required=True)

    p = add("cmf", cmd_cmf, "Segment every utterance and write its consistency factor.")
    _add_embed_flags(p)
    p.add_argument("--out", type=_output_file, required=True)

    p = add("score", cmd_score, "Cosine-score a trial list, CMF-calibrated when a CMF map is given.")
    p.add_argument("--trials", type=_input_file, required=True)
    p.add_argument("--embeddings", type=_input_file, required=True)
    p.add_argument("--cmf-map", type=_input_file, help="CMF map; scores become cmf_e * cmf_t * cosine")
    p.add_argument("--out", type=_output_file, required=True)
    _add_threads(p)

    p = add("asnorm", cmd_asnorm, "Normalize a score file against a speaker-averaged cohort.")
    p.add_argument("--scores", type=_input_file, required=True)
    p.add_argument("--embeddings", type=_input_file, required=True)
    p.add_argument("--corpus", type=_input_file, required=True, help="maps utterances to speakers")
    p.add_argument("--cohort-speakers", type=_input_file, required=True)
    p.add_argument("--top-k", type=_positive_int, default=DEFAULT_TOP_K)
    p.add_argument("--cmf-map", type=_input_file,
                   help="scale cohort statistics by CMF (use when the scores are CMF-calibrated)")
    p.add_argument("--stats-out", type=_output_file, help="also write unscaled cohort statistics")
    p.add_argument("--out", type=_output_file, required=True)
    _add_threads(p)

    for name, fn, text in (
        ("qmf-train", cmd_qmf_train, "Train the QMF logistic regression on labeled normalized scores."),
        ("qmf-apply", cmd_qmf_apply, "Apply a QMF model to a normalized score file."),
    ):
        p = add(name, fn, text)
        if name == "qmf-train":
            p.add_argument("--trials", type=_input_file, required=True, help="labeled trial list")
        else:
            p.add_argument("--model", type=_input_file, required=True)
        p.add_argument("--scores", type=_input_file, required=True)
        p.add_argument("--embeddings", type=_input_file, required=True)
        p.add_argument("--stats", type=_input_file, required=True, help="cohort stats from `asnorm --stats-out`")
        p.add_argument("--corpus", type=_input_file, required=True, help="durations")
        p.add_argument("--out", type=_output_file, required=True)
        if name == "qmf-train":
            p.add_argument("--learning-rate", type=float, default=0.5)
            p.add_argument("--epochs", type=_positive_int, default=2000)
            p.add_argument("--l2", type=float, default=1e-4)
            p.add_argument("--prior", type=_probability, help="weight targets to this effective prior")
            p.add_argument("--linear", action="store_true", help="durations and magnitudes without log")
            p.add_argument("--seed", type=int, default=0)

    p = add("fuse", cmd_fuse, "Weighted mean of several score files over the same trials.")
    p.add_argument("--scores", type=_input_file, nargs="+", required=True)
    p.add_argument("--weights", type=float, nargs="+", help="one weight per score file (default equal)")
    p.add_argument("--out", type=_output_file, required=True)

    p = add("eval", cmd_eval, "Report EER and minDCF of a score file against labeled trials.")
    p.add_argument("--trials", type=_input_file, required=True)
    p.add_argument("--scores", type=_input_file, required=True)
    p.add_argument("--p-target", type=_probability, action="append",
                   help="minDCF target prior (repeatable; default 0.01 and 0.05)")
    p.add_argument("--out", type=_output_file, help="also write the report here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, OSError) as exc:  # BackendError is a ValueError
        print("%s %s: error: %s" % (PROG, args.command, exc), file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
