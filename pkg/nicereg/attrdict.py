"""This module provides AttrDict, a dict with attribute access, and
Config, the base class for the configuration sections.

Copyright 2026 nicereg developers
"""

import json
from .errors import ConfigError


class AttrDict(dict):

    def __init__(self, *args, **kwargs):

        super(AttrDict, self).__init__(*args, **kwargs)
        self.__dict__ = self


class Config(AttrDict):
    """A configuration section.  Subclasses list their keys and default
    values in `defaults` and check them in `validate`.  Values passed
    as strings (from the command line) are coerced to the type of the
    default."""

    defaults = {}

    def __init__(self, *args, **kwargs):

        super(Config, self).__init__()
        for key, val in self.defaults.items():
            self[key] = list(val) if isinstance(val, list) else val
        self.update(*args, **kwargs)
        self.validate()

    def update(self, *args, **kwargs):

        for key, val in dict(*args, **kwargs).items():
            if key not in self.defaults:
                raise ConfigError('Unknown %s key %s' %
                                  (self.__class__.__name__, key))
            self[key] = self._coerce(key, val)

    def _coerce(self, key, val):

        default = self.defaults[key]
        if not isinstance(val, str) or isinstance(default, str):
            if isinstance(default, float) and isinstance(val, int) \
               and not isinstance(val, bool):
                return float(val)
            return val

        try:
            if isinstance(default, bool):
                if val.lower() in ('true', '1', 'yes'):
                    return True
                if val.lower() in ('false', '0', 'no'):
                    return False
                raise ValueError(val)
            if isinstance(default, int):
                return int(val)
            if isinstance(default, float):
                return float(val)
            if isinstance(default, list) or default is None:
                return json.loads(val)
        except ValueError:
            raise ConfigError('Cannot interpret %s=%s' % (key, val))
        return val

    def validate(self):
        pass

    def copy(self, **kwargs):

        new = self.__class__(dict(self))
        new.update(kwargs)
        new.validate()
        return new

    def as_dict(self):

        return {key: self[key] for key in self.defaults}
