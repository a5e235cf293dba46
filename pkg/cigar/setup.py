"""
    This file is part of cigar.


    Provides a simple set of default settings that can be overridden, either
    attribute by attribute, in bulk with set(), or from a flat key=value file
    with load(). The current values can be written back out with dump() so
    that every run records the configuration it used.

"""

import ast
import logging
import os
from typing import Any

from cigar.classes.errors import ConfigurationError


log = logging.getLogger(__name__)


class BaseSettings:
    def __init__(self) -> None:
        """ Dataset preparation. """
        self.log_format = 'csv'

        self.kcore = 5

        self.drop_top_percent = 0.0

        self.seed = 0

        """ HashRec. Alpha defaults to 10/r when left as None. """
        self.code_bits = 64

        self.hashrec_lambda = 0.001

        self.hashrec_alpha = None

        self.beta_floor = 1e-3

        self.init_scale = 0.5

        """ Optimization shared by HashRec and the rankers. Iterations per
        epoch default to one pass over the training interactions. """
        self.num_epochs = 100

        self.iters_per_epoch = None

        self.batch_size = 10000

        self.learning_rate = 0.001

        """ Early stopping. """
        self.eval_every = 10

        self.patience = 20

        self.hashrec_eval_n = 200

        self.ranker_eval_n = 10

        """ Rankers. """
        self.ranker = 'bpr-mf'

        self.embedding_dim = 50

        self.ranker_lambda = 0.0001

        self.ranker_init_std = 0.01

        self.margin = 1.0

        self.mlp_arch = [200, 100, 50, 25]

        self.neumf_dim = 25

        self.sampling_ratio = 0.5

        """ Candidate generation. Substrings default by catalogue size
        when left as None. """
        self.candidates = 200

        self.max_radius = 1

        self.substrings = None

        self.candidate_source = 'mih'

        """ Evaluation and benchmarks. """
        self.top_n = 10

        self.eval_users = None

        self.bench_queries = 1000

        self.bench_warmup = 100

        self.bench_repeats = 3

        """ Concurrency: worker threads for evaluation fan-out and the
        background triplet sampler. """
        self.threads = int(os.environ.get('CIGAR_THREADS', 1))

        self.sampler_queue_size = 4

    @property
    def alpha(self) -> float:
        """ Cascading setting - HashRec's sigmoid scale. """
        return 10 / self.code_bits if self.hashrec_alpha is None else self.hashrec_alpha

    def load(self, path: str) -> None:
        """ Read a flat key=value file. Values are coerced to the type of
        the current default. """
        with open(path, 'r') as file:
            for number, line in enumerate(file, start=1):
                line = line.split('#', 1)[0].strip()

                if not line:
                    continue

                if '=' not in line:
                    raise ConfigurationError(f'{path}:{number}: expected key=value')

                key, value = (v.strip() for v in line.split('=', 1))
                setattr(self, key, self.coerce(key, value))

        log.debug('Loaded settings from %s', path)

    def dump(self, path: str) -> None:
        """ Write every setting as key=value. """
        with open(path, 'w') as file:
            for key, value in self.values().items():
                file.write(f'{key}={"" if value is None else value}\n')

    def values(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k[0] != '_'}

    def coerce(self, key: str, value: Any) -> Any:
        """ Convert a string value to the type of the named setting. """
        if key not in self.__dict__:
            raise ConfigurationError(f'Unknown setting: {key}')

        if not isinstance(value, str):
            return value

        if value == '' or value.lower() == 'none':
            return None

        current = self.__dict__[key]

        try:
            if isinstance(current, bool):
                return value.lower() in ('1', 'true', 'yes', 'on')
            if isinstance(current, int):
                return int(value)
            if isinstance(current, float):
                return float(value)
            if isinstance(current, list):
                return list(ast.literal_eval(value))
            if isinstance(current, str):
                return value
            return ast.literal_eval(value)
        except (ValueError, SyntaxError) as e:
            raise ConfigurationError(f'Bad value for {key}: {value}') from e


class StaticSingleton(type):
    """ Metaclass to ensure singleton behavior & route everything to
    our BaseSettings instance to emulate static behavior. """
    _instance = BaseSettings()

    def reset(cls) -> None:
        """ Reset all settings to default. """
        StaticSingleton._instance = BaseSettings()

    def set(cls, values: dict) -> None:
        """ Helper mass-set method. Strings are coerced to the setting's
        type so command-line values can be passed straight through. """
        for key, value in values.items():
            setattr(StaticSingleton._instance, key, StaticSingleton._instance.coerce(key, value))

    def __getattr__(cls, name: str) -> Any:
        return getattr(StaticSingleton._instance, name)

    def __setattr__(cls, name: str, value: Any) -> None:
        return setattr(StaticSingleton._instance, name, value)


class settings(metaclass=StaticSingleton):
    """ Expose actual class for import. """
    pass
