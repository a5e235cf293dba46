"""
    This file is part of cigar.


    Command line. Each subcommand runs one pipeline stage over artifact
    files; `pipeline` runs them all into one output directory and `sweep`
    varies c and h over a shared set of codes.

    Settings come from the defaults, then an optional --config key=value
    file, then --set overrides and the dedicated flags. The settings in
    effect are written next to every output.

    Exit codes: 0 success, 2 bad input or usage, 3 numeric or training
    failure.

"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from cigar.classes.errors import CigarError, ConfigurationError, InputError, NumericError, SamplingError
from cigar.classes.serialize import ToJSON
from cigar.classes.wrap import Recommendation
from cigar.const import data, models, names
from cigar.models import ranker
from cigar.models.hashrec import HashRecConfig, HashRecModel, train_hashrec
from cigar.pipeline import Pipeline, RunConfig
from cigar.reports import bench, evaluate
from cigar.setup import settings
from cigar.tools import dataset as datasets, metrics, mih
from cigar.tools.dataset import InteractionDataset


log = logging.getLogger('cigar')


EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


""" Dedicated flags and the settings they override. """
FLAGS = {
    'format': 'log_format',
    'kcore': 'kcore',
    'seed': 'seed',
    'drop_top': 'drop_top_percent',
    'bits': 'code_bits',
    'epochs': 'num_epochs',
    'batch_size': 'batch_size',
    'lr': 'learning_rate',
    'ranker': 'ranker',
    'dim': 'embedding_dim',
    'h': 'sampling_ratio',
    'c': 'candidates',
    'radius': 'max_radius',
    'substrings': 'substrings',
    'source': 'candidate_source',
    'queries': 'bench_queries',
}


def configure(args: argparse.Namespace) -> None:
    """ Applies config file, --set pairs and flags, in that order. """
    settings.reset()

    if args.config:
        settings.load(args.config)

    for pair in args.set or []:
        if '=' not in pair:
            raise ConfigurationError(f'Expected key=value, got {pair}')
        key, value = pair.split('=', 1)
        settings.set({key.strip(): value.strip()})

    settings.set({key: getattr(args, flag) for flag, key in FLAGS.items() if getattr(args, flag, None) is not None})


def record_settings(output: str) -> None:
    """ Writes the settings in effect beside an output file. """
    directory = output if os.path.isdir(output) else os.path.dirname(os.path.abspath(output))
    os.makedirs(directory, exist_ok=True)
    settings.dump(os.path.join(directory, 'settings.cfg'))


def _user_id(dataset: InteractionDataset, raw: int) -> int:
    found = np.flatnonzero(dataset.user_remap == raw)
    if not len(found):
        raise InputError(f'Unknown user: {raw}')
    return int(found[0])


def cmd_ingest(args: argparse.Namespace) -> int:
    dataset = datasets.prepare(args.input, settings.log_format, settings.kcore, settings.seed, settings.drop_top_percent)
    dataset.save(args.output)
    record_settings(args.output)
    print(f'{dataset.num_users} users, {dataset.num_items} items, {dataset.num_train} training interactions')
    return EXIT_OK


def cmd_train_hash(args: argparse.Namespace) -> int:
    dataset = InteractionDataset.load(args.dataset)
    warm_start = HashRecModel.load(args.warm_start) if args.warm_start else None
    model = train_hashrec(dataset, HashRecConfig(), warm_start)
    model.save(args.output)
    model.curve_frame().to_csv(args.curve or f'{os.path.splitext(args.output)[0]}_curve.csv', index=False)
    record_settings(args.output)
    return EXIT_OK


def cmd_build_index(args: argparse.Namespace) -> int:
    _, item_codes = HashRecModel.load_codes(args.model)
    index = mih.build_index(item_codes, settings.substrings or mih.default_substrings(item_codes.rows))
    index.save(args.output)
    record_settings(args.output)
    return EXIT_OK


def cmd_gen_candidates(args: argparse.Namespace) -> int:
    dataset = InteractionDataset.load(args.dataset)
    user_codes, item_codes = HashRecModel.load_codes(args.model) if args.model else (None, None)
    index = mih.MultiIndexHashTable.load(args.index) if args.index else None

    if settings.candidate_source == data.SOURCE_MIH and index is None:
        raise ConfigurationError('MIH candidates need --model and --index')
    if settings.candidate_source == data.SOURCE_LINEAR and user_codes is None:
        raise ConfigurationError('Linear-scan candidates need --model')

    candidates = mih.generate_candidates(dataset, settings.candidates, settings.candidate_source, user_codes, index, item_codes, settings.max_radius, settings.threads)
    candidates.save(args.output)
    record_settings(args.output)
    return EXIT_OK


def cmd_train_ranker(args: argparse.Namespace) -> int:
    dataset = InteractionDataset.load(args.dataset)
    candidates = mih.CandidateSet.load(args.candidates) if args.candidates else None
    config = ranker.RerankConfig()

    if config.kind == models.BPR_B:
        # BPR-B quantizes a BPR-MF model trained at the code length
        base = ranker.train_ranker(dataset, ranker.RerankConfig(kind=models.BPR_MF, k=settings.code_bits), candidates)
        model = ranker.quantize_to_bprb(base)
    else:
        model = ranker.train_ranker(dataset, config, candidates)

    model.save(args.output)
    record_settings(args.output)

    if model.telemetry:
        print(json.dumps(model.telemetry, cls=ToJSON))

    return EXIT_OK


def _load_codes(args: argparse.Namespace) -> tuple:
    user_codes, item_codes = HashRecModel.load_codes(args.model) if args.model else (None, None)
    index = mih.MultiIndexHashTable.load(args.index) if args.index else None
    return user_codes, item_codes, index


def cmd_recommend(args: argparse.Namespace) -> int:
    dataset = InteractionDataset.load(args.dataset)
    model = ranker.RankerModel.load(args.ranker_model)
    user = _user_id(dataset, args.user)
    train = dataset.train_items(user)
    user_codes, item_codes, index = _load_codes(args)

    if index is not None:
        candidates = mih.retrieve(dataset, user, settings.candidates, data.SOURCE_MIH, user_codes, index, item_codes, settings.max_radius)
        items = ranker.rerank(model, user, candidates, args.n, train)
    else:
        scores = model.scores(user)
        scores[train] = -np.inf
        items = metrics.top_n(scores, np.arange(dataset.num_items), args.n)

    recommendation = Recommendation(args.user, dataset.item_remap[items], model.scores(user, items), model.name)
    print(json.dumps(recommendation, cls=ToJSON, indent=4) if args.json else recommendation)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    dataset = InteractionDataset.load(args.dataset)
    user_codes, item_codes, index = _load_codes(args)
    n = args.n or [settings.top_n]

    if args.mode != 'full' and settings.candidate_source == data.SOURCE_MIH and index is None:
        raise ConfigurationError('MIH candidates need --model and --index')
    if args.ranker_model is None and user_codes is None and args.mode != 'candidates':
        raise ConfigurationError('Nothing to evaluate: pass --ranker-model or --model')

    if args.mode == 'candidates':
        report = evaluate.evaluate_candidates(user_codes, index, dataset, settings.candidates, args.split, source=settings.candidate_source, item_codes=item_codes)
    else:
        model = ranker.RankerModel.load(args.ranker_model) if args.ranker_model else ranker.code_model(user_codes, item_codes, 'HashRec')

        if args.mode == 'cigar':
            report = evaluate.evaluate_cigar(user_codes, index, model, dataset, n, settings.candidates, args.split, source=settings.candidate_source, item_codes=item_codes)
        else:
            report = evaluate.evaluate_full(model, dataset, n, args.split)

    print(report)

    if args.output:
        with open(args.output, 'w') as file:
            json.dump(report, file, cls=ToJSON, indent=4)
        record_settings(args.output)

    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    dataset = InteractionDataset.load(args.dataset)
    user_codes, item_codes, index = _load_codes(args)
    model = ranker.RankerModel.load(args.ranker_model) if args.ranker_model else None
    table = bench.bench_retrieval(args.methods, dataset, settings.bench_queries, model, user_codes, item_codes, index)
    print(table)

    if args.output:
        table.to_csv(args.output)
        record_settings(args.output)

    return EXIT_OK


def _run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(input=args.input, dataset=args.dataset, output=args.output, top_n=args.n or [settings.top_n])


def cmd_pipeline(args: argparse.Namespace) -> int:
    reports = Pipeline(_run_config(args)).run()
    print('\n\n'.join(str(report) for report in reports.values()))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    frame = Pipeline(_run_config(args)).sweep(args.cs, args.hs)
    print(frame.to_string(index=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='key=value settings file')
    common.add_argument('--set', action='append', metavar='KEY=VALUE', help='override one setting')
    common.add_argument('--verbose', '-v', action='store_true')
    common.add_argument('--seed', type=int)

    parser = argparse.ArgumentParser(prog='cigar', description='Hashing-based candidate generation and re-ranking for Top-N recommendation')
    commands = parser.add_subparsers(dest='command', required=True)

    ingest = commands.add_parser('ingest', parents=[common], help='log -> k-core -> leave-one-out dataset')
    ingest.add_argument('--input', required=True)
    ingest.add_argument('--output', required=True)
    ingest.add_argument('--format', choices=list(data.SEPARATORS))
    ingest.add_argument('--kcore', type=int)
    ingest.add_argument('--drop-top', dest='drop_top', type=float, help='percent of most popular items to drop')
    ingest.set_defaults(handler=cmd_ingest)

    train_hash = commands.add_parser('train-hash', parents=[common], help='train HashRec codes')
    train_hash.add_argument('--dataset', required=True)
    train_hash.add_argument('--output', required=True)
    train_hash.add_argument('--warm-start', dest='warm_start')
    train_hash.add_argument('--curve', help='training curve CSV')
    train_hash.add_argument('--bits', type=int)
    train_hash.add_argument('--epochs', type=int)
    train_hash.add_argument('--batch-size', dest='batch_size', type=int)
    train_hash.add_argument('--lr', type=float)
    train_hash.set_defaults(handler=cmd_train_hash)

    build = commands.add_parser('build-index', parents=[common], help='multi-index hash table over item codes')
    build.add_argument('--model', required=True)
    build.add_argument('--output', required=True)
    build.add_argument('--substrings', type=int)
    build.set_defaults(handler=cmd_build_index)

    generate = commands.add_parser('gen-candidates', parents=[common], help='precompute per-user candidates')
    generate.add_argument('--dataset', required=True)
    generate.add_argument('--output', required=True)
    generate.add_argument('--model')
    generate.add_argument('--index')
    generate.add_argument('-c', type=int)
    generate.add_argument('--radius', type=int)
    generate.add_argument('--source', choices=list(data.SOURCES))
    generate.set_defaults(handler=cmd_gen_candidates)

    train = commands.add_parser('train-ranker', parents=[common], help='train a re-ranking model')
    train.add_argument('--dataset', required=True)
    train.add_argument('--output', required=True)
    train.add_argument('--ranker', choices=list(names.MODEL_KEYS))
    train.add_argument('--candidates', help='candidate file; trains the candidate-oriented variant')
    train.add_argument('--h', type=float)
    train.add_argument('--dim', type=int)
    train.add_argument('--epochs', type=int)
    train.add_argument('--batch-size', dest='batch_size', type=int)
    train.add_argument('--lr', type=float)
    train.set_defaults(handler=cmd_train_ranker)

    recommend = commands.add_parser('recommend', parents=[common], help='Top-N items for one user')
    recommend.add_argument('--dataset', required=True)
    recommend.add_argument('--ranker-model', dest='ranker_model', required=True)
    recommend.add_argument('--user', type=int, required=True, help='user id as in the input log')
    recommend.add_argument('-n', type=int, default=10)
    recommend.add_argument('--model', help='HashRec model; with --index re-ranks MIH candidates')
    recommend.add_argument('--index')
    recommend.add_argument('-c', type=int)
    recommend.add_argument('--json', action='store_true')
    recommend.set_defaults(handler=cmd_recommend)

    score = commands.add_parser('evaluate', parents=[common], help='leave-one-out HR@N and MRR@N')
    score.add_argument('--dataset', required=True)
    score.add_argument('--mode', choices=['full', 'cigar', 'candidates'], default='full')
    score.add_argument('--ranker-model', dest='ranker_model')
    score.add_argument('--model')
    score.add_argument('--index')
    score.add_argument('--split', choices=list(data.SPLITS), default=data.TEST)
    score.add_argument('-n', type=int, nargs='+')
    score.add_argument('-c', type=int)
    score.add_argument('--source', choices=list(data.SOURCES))
    score.add_argument('--output', help='JSON report')
    score.set_defaults(handler=cmd_evaluate)

    timing = commands.add_parser('bench', parents=[common], help='time Top-N retrieval')
    timing.add_argument('--dataset', required=True)
    timing.add_argument('--methods', nargs='+', choices=list(data.BENCH_METHODS), default=list(data.BENCH_METHODS))
    timing.add_argument('--ranker-model', dest='ranker_model')
    timing.add_argument('--model')
    timing.add_argument('--index')
    timing.add_argument('--queries', type=int)
    timing.add_argument('--output', help='latency CSV')
    timing.set_defaults(handler=cmd_bench)

    for name, handler, help in (('pipeline', cmd_pipeline, 'run every stage end to end'), ('sweep', cmd_sweep, 'evaluate over lists of c and h')):
        run = commands.add_parser(name, parents=[common], help=help)
        source = run.add_mutually_exclusive_group(required=True)
        source.add_argument('--input', help='raw interaction log')
        source.add_argument('--dataset', help='prepared dataset file')
        run.add_argument('--output', required=True, help='run directory')
        run.add_argument('--format', choices=list(data.SEPARATORS))
        run.add_argument('--kcore', type=int)
        run.add_argument('--bits', type=int)
        run.add_argument('--epochs', type=int)
        run.add_argument('--ranker', choices=[key for key, kind in names.MODEL_KEYS.items() if kind in models.TRAINABLE])
        run.add_argument('--h', type=float)
        run.add_argument('-c', type=int)
        run.add_argument('--radius', type=int)
        run.add_argument('--substrings', type=int)
        run.add_argument('-n', type=int, nargs='+')
        run.set_defaults(handler=handler)

        if name == 'sweep':
            run.add_argument('--cs', type=int, nargs='+', default=[50, 100, 200, 400])
            run.add_argument('--hs', type=float, nargs='+', default=[0.0, 0.25, 0.5, 0.75, 1.0])

    return parser


def main(argv: list = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        )

    try:
        configure(args)
        return args.handler(args)
    except (InputError, ConfigurationError) as e:
        log.error('%s', e)
        return EXIT_INPUT
    except (NumericError, SamplingError) as e:
        log.error('%s', e)
        return EXIT_NUMERIC
    except CigarError as e:
        log.error('%s', e)
        return EXIT_INPUT
    except OSError as e:
        log.error('%s', e)
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())
