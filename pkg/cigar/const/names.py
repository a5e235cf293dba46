"""
    This file is part of cigar.


    Human-readable names for constants, used in reports, logs and
    command-line choices.

"""

from cigar.const import models


MODELS = {
    models.BPR_MF: 'BPR-MF',
    models.CML: 'CML',
    models.NEUMF: 'NeuMF',
    models.POP: 'POP',
    models.BPR_B: 'BPR-B',
}

""" Command-line spellings of model kinds. """
MODEL_KEYS = {
    'bpr-mf': models.BPR_MF,
    'cml': models.CML,
    'neumf': models.NEUMF,
    'pop': models.POP,
    'bpr-b': models.BPR_B,
}


def model(kind: int, candidate_oriented: bool = False) -> str:
    """ Returns a model's display name, with a trailing + for models
    trained on candidate-oriented samples. """
    return f'{MODELS[kind]}+' if candidate_oriented else MODELS[kind]
