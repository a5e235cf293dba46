"""
    This file is part of cigar.


    The user-facing pipeline. A RunConfig describes one run; Pipeline
    executes its stages in order, keeping each stage's output on the
    instance and writing every artifact to the run's output directory:

        ingest          raw log -> k-core -> leave-one-out dataset
        train_hash      HashRec codes plus the per-epoch training curve
        build_index     multi-index hash table over the item codes
        gen_candidates  c candidates per user for candidate-oriented training
        train_ranker    the re-ranking model ("+" variant)
        evaluate        candidate-stage, HashRec and pipeline reports

    Stages can also be run one at a time; each one loads what it needs
    from the output directory if an earlier stage has not run in this
    process. Every report is easily serializable with ToJSON.

"""

import json
import logging
import os
from dataclasses import dataclass, field, replace

import pandas as pd

from cigar.classes.errors import ConfigurationError, InputError
from cigar.classes.serialize import ToJSON
from cigar.const import data
from cigar.models.hashrec import HashRecConfig, HashRecModel, train_hashrec
from cigar.models.ranker import RankerModel, RerankConfig, code_model, train_ranker
from cigar.reports import evaluate
from cigar.setup import settings
from cigar.tools import dataset as datasets, mih
from cigar.tools.dataset import InteractionDataset
from cigar.tools.mih import CandidateSet, MultiIndexHashTable


log = logging.getLogger(__name__)


""" Artifact file names inside a run directory. """
DATASET_FILE = 'dataset.cgds'
HASHREC_FILE = 'hashrec.cghr'
INDEX_FILE = 'index.cgix'
CANDIDATES_FILE = 'candidates.cgcd'
RANKER_FILE = 'ranker.cgrk'
CURVE_FILE = 'hashrec_curve.csv'
SETTINGS_FILE = 'settings.cfg'
REPORT_FILE = 'report'


@dataclass
class RunConfig:
    input: str = None
    dataset: str = None
    output: str = 'cigar-run'
    format: str = field(default_factory=lambda: settings.log_format)
    kcore: int = field(default_factory=lambda: settings.kcore)
    seed: int = field(default_factory=lambda: settings.seed)
    drop_top_percent: float = field(default_factory=lambda: settings.drop_top_percent)
    hashrec: HashRecConfig = field(default_factory=HashRecConfig)
    rerank: RerankConfig = field(default_factory=RerankConfig)
    m: int = field(default_factory=lambda: settings.substrings)
    c: int = field(default_factory=lambda: settings.candidates)
    l_max: int = field(default_factory=lambda: settings.max_radius)
    source: str = field(default_factory=lambda: settings.candidate_source)
    top_n: list = field(default_factory=lambda: [settings.top_n])

    def validate(self) -> 'RunConfig':
        for path in (self.input, self.dataset):
            if path is not None and not os.path.exists(path):
                raise InputError(f'{path} does not exist')
        if self.source not in data.SOURCES:
            raise ConfigurationError(f'Unknown candidate source: {self.source}')
        if self.c < 1 or self.l_max < 0:
            raise ConfigurationError('c must be positive and l_max non-negative')
        if self.m is not None and self.hashrec.r % self.m:
            raise ConfigurationError(f'Code length {self.hashrec.r} is not divisible into {self.m} substrings')
        self.hashrec.validate()
        self.rerank.validate()
        return self


class Pipeline:
    def __init__(self, config: RunConfig) -> None:
        self.config = config.validate()
        self.dataset: InteractionDataset = None
        self.hashrec: HashRecModel = None
        self.index: MultiIndexHashTable = None
        self.candidates: CandidateSet = None
        self.ranker: RankerModel = None
        self.reports = {}

        os.makedirs(config.output, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.config.output, name)

    def ingest(self) -> InteractionDataset:
        if self.config.input is not None:
            self.dataset = datasets.prepare(self.config.input, self.config.format, self.config.kcore, self.config.seed, self.config.drop_top_percent)
            self.dataset.save(self.path(DATASET_FILE))
        else:
            self.dataset = InteractionDataset.load(self.config.dataset or self.path(DATASET_FILE))

        return self.dataset

    def train_hash(self, warm_start: HashRecModel = None) -> HashRecModel:
        self.hashrec = train_hashrec(self._dataset(), self.config.hashrec, warm_start)
        self.hashrec.save(self.path(HASHREC_FILE))
        self.hashrec.curve_frame().to_csv(self.path(CURVE_FILE), index=False)
        return self.hashrec

    def build_index(self) -> MultiIndexHashTable:
        hashrec = self._hashrec()
        m = self.config.m or mih.default_substrings(hashrec.item_emb.shape[0])
        self.index = mih.build_index(hashrec.item_codes, m)
        self.index.save(self.path(INDEX_FILE))
        return self.index

    def gen_candidates(self) -> CandidateSet:
        self.candidates = mih.generate_candidates(
                dataset=self._dataset(),
                c=self.config.c,
                source=self.config.source,
                user_codes=self._hashrec().user_codes,
                index=self._index() if self.config.source == data.SOURCE_MIH else None,
                item_codes=self._hashrec().item_codes,
                l_max=self.config.l_max,
                threads=settings.threads,
            )
        self.candidates.save(self.path(CANDIDATES_FILE))
        return self.candidates

    def train_ranker(self, config: RerankConfig = None) -> RankerModel:
        self.ranker = train_ranker(self._dataset(), config or self.config.rerank, self._candidates())
        self.ranker.save(self.path(RANKER_FILE))
        return self.ranker

    def evaluate(self, split: str = data.TEST) -> dict:
        dataset, hashrec = self._dataset(), self._hashrec()
        index = self._index() if self.config.source == data.SOURCE_MIH else None
        codes = dict(user_codes=hashrec.user_codes, index=index, dataset=dataset, split=split, l_max=self.config.l_max, source=self.config.source, item_codes=hashrec.item_codes)

        self.reports['candidates'] = evaluate.evaluate_candidates(c=self.config.c, label='HashRec', **codes)
        self.reports['hashrec'] = evaluate.evaluate_full(code_model(hashrec.user_codes, hashrec.item_codes, 'HashRec'), dataset, self.config.top_n, split)
        self.reports['cigar'] = evaluate.evaluate_cigar(model=self._ranker(), n=self.config.top_n, c=self.config.c, **codes)
        self.reports['cigar'].extra.update(self._ranker().telemetry)

        return self.reports

    def run(self) -> dict:
        """ Every stage in order, then the reports. """
        settings.dump(self.path(SETTINGS_FILE))
        self.ingest()
        self.train_hash()
        self.build_index()
        self.gen_candidates()
        self.train_ranker()
        self.evaluate()
        self.write_reports(self.reports, REPORT_FILE)
        return self.reports

    def sweep(self, cs: list, hs: list) -> pd.DataFrame:
        """ Trains one ranker per sampling ratio h and evaluates each over
        every candidate count c. Codes, index and training candidates are
        shared by all points. """
        settings.dump(self.path(SETTINGS_FILE))
        dataset = self._dataset()
        hashrec, index = self._hashrec(), self._index()
        self._candidates()
        rows, reports = [], {}

        for h in hs:
            ranker = self.train_ranker(replace(self.config.rerank, h=h))

            for c in cs:
                report = evaluate.evaluate_cigar(hashrec.user_codes, index, ranker, dataset, self.config.top_n, c, l_max=self.config.l_max, source=self.config.source, item_codes=hashrec.item_codes)
                report.extra.update({'h': h, **ranker.telemetry})
                reports[f'h={h},c={c}'] = report
                rows.append({'h': h, 'c': c, **{f'hr@{n}': cutoff.hr for n, cutoff in report.cutoffs.items()}, **{f'mrr@{n}': cutoff.mrr for n, cutoff in report.cutoffs.items()}})

        frame = pd.DataFrame(rows)
        frame.to_csv(self.path('sweep.csv'), index=False)
        self.write_reports(reports, 'sweep')
        return frame

    def write_reports(self, reports: dict, name: str) -> None:
        with open(self.path(f'{name}.json'), 'w') as file:
            json.dump(reports, file, cls=ToJSON, indent=4)

        with open(self.path(f'{name}.txt'), 'w') as file:
            file.write('\n\n'.join(str(report) for report in reports.values()) + '\n')

    def _dataset(self) -> InteractionDataset:
        return self.dataset or self.ingest()

    def _hashrec(self) -> HashRecModel:
        if self.hashrec is None:
            self.hashrec = HashRecModel.load(self.path(HASHREC_FILE)) if os.path.exists(self.path(HASHREC_FILE)) else self.train_hash()
        return self.hashrec

    def _index(self) -> MultiIndexHashTable:
        if self.index is None:
            self.index = MultiIndexHashTable.load(self.path(INDEX_FILE)) if os.path.exists(self.path(INDEX_FILE)) else self.build_index()
        return self.index

    def _candidates(self) -> CandidateSet:
        if self.candidates is None:
            self.candidates = CandidateSet.load(self.path(CANDIDATES_FILE)) if os.path.exists(self.path(CANDIDATES_FILE)) else self.gen_candidates()
        return self.candidates

    def _ranker(self) -> RankerModel:
        if self.ranker is None:
            self.ranker = RankerModel.load(self.path(RANKER_FILE)) if os.path.exists(self.path(RANKER_FILE)) else self.train_ranker()
        return self.ranker
