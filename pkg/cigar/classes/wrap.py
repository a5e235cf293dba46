"""
    This file is part of cigar.


    Defines classes to represent results in multiple formats. Each class
    wraps the raw dicts produced by the tools and reports modules; its
    public attributes are what ToJSON writes and its __str__ is the
    aligned-text version for people.

"""

import numpy as np
import pandas as pd

from cigar.const import data


class Cutoff:
    def __init__(self, n: int, hr: float, mrr: float) -> None:
        self.n = n
        self.hr = hr
        self.mrr = mrr

    def __str__(self) -> str:
        return f'HR@{self.n:<4} {self.hr:.4f}    MRR@{self.n:<4} {self.mrr:.4f}'


class EvalReport:
    """ Leave-one-out results for one model and stage. hr_at_n and
    mrr_at_n refer to the first cutoff; every cutoff is kept in
    cutoffs. """
    def __init__(self, result: dict, model: str, stage: str, split: str = data.TEST, keep_ranks: bool = False) -> None:
        ns = list(result['hr'])
        self.model = model
        self.stage = stage
        self.split = split
        self.n = ns[0] if ns else None
        self.hr_at_n = result['hr'][self.n] if ns else 0.0
        self.mrr_at_n = result['mrr'][self.n] if ns else 0.0
        self.num_users_evaluated = result['num_users']
        self.cutoffs = {n: Cutoff(n, result['hr'][n], result['mrr'][n]) for n in ns}
        self.per_user_ranks = np.asarray(result['ranks']).tolist() if keep_ranks else None
        self.extra = {}
        self._ranks = np.asarray(result['ranks'])

    def at(self, n: int) -> Cutoff:
        return self.cutoffs[n]

    @property
    def ranks(self) -> np.ndarray:
        """ Found position per evaluated user, 0 for a miss. """
        return self._ranks

    def __str__(self) -> str:
        lines = [f'{self.model} ({self.stage}, {self.split}, {self.num_users_evaluated} users)']
        lines += [f'    {cutoff}' for cutoff in self.cutoffs.values()]
        lines += [f'    {key}: {value}' for key, value in self.extra.items()]
        return '\n'.join(lines)


class LatencyTable:
    """ Per-method query timings. Times are seconds for totals and
    milliseconds per query for the rest. """
    columns = ['method', 'queries', 'repeats', 'total_s', 'total_s_std', 'mean_ms', 'p50_ms', 'p90_ms', 'p99_ms', 'max_ms']

    def __init__(self, rows: list) -> None:
        self.rows = rows

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=LatencyTable.columns)

    def to_csv(self, path: str) -> None:
        self.frame().to_csv(path, index=False, float_format='%.6f')

    def to_json(self) -> list:
        return self.rows

    def __len__(self) -> int:
        return len(self.rows)

    def __str__(self) -> str:
        if not self.rows:
            return 'No queries timed'
        return self.frame().to_string(index=False, float_format=lambda value: f'{value:.4f}')


class Recommendation:
    def __init__(self, user: int, items: np.ndarray, scores: np.ndarray, model: str) -> None:
        self.user = user
        self.model = model
        self.items = np.asarray(items).tolist()
        self.scores = np.asarray(scores, dtype=np.float64).tolist()

    def __str__(self) -> str:
        lines = [f'Top {len(self.items)} for user {self.user} ({self.model})']
        lines += [f'{position:>4}. item {item:<8} {score:.4f}' for position, (item, score) in enumerate(zip(self.items, self.scores), start=1)]
        return '\n'.join(lines)
