"""
    This file is part of cigar.


    A very basic serializer class to use with the stock json module. It
    understands numpy scalars and arrays as well as the package's own
    objects.

"""

from json import JSONEncoder

import numpy as np


class ToJSON(JSONEncoder):
    def default(self, obj) -> dict | list | int | float | str | None:
        if hasattr(obj, 'to_json'):
            return obj.to_json()

        if isinstance(obj, np.integer):
            return int(obj)

        if isinstance(obj, np.floating):
            return float(obj)

        if isinstance(obj, np.ndarray):
            return obj.tolist()

        if hasattr(obj, '__dict__'):
            return {k: v for k, v in obj.__dict__.items() if k[0] != '_'}

        if hasattr(obj, '__str__'):
            return str(obj)

        return None
