"""This module provides the Opts class for parsing configuration
overrides given on the command line, for example,

   --set "train.lr=1e-3, model.enc_channels={[8, 16, 16, 32, 32]}"

Commas inside braces do not split; the braces are stripped from the
value.

Copyright 2026 nicereg developers
"""

from .errors import ConfigError


class Opts(dict):

    def __init__(self, arg=None):

        if arg is None:
            return

        self.add(arg)

    def add(self, string):

        def split(s):
            """Split a string by , except if in braces"""
            parts = []
            bracket_level = 0
            current = []
            for c in (s + ','):
                if c == ',' and bracket_level == 0:
                    parts.append(''.join(current))
                    current = []
                else:
                    if c == '{':
                        bracket_level += 1
                    elif c == '}':
                        bracket_level -= 1
                    current.append(c)
            if bracket_level != 0:
                raise ConfigError('Mismatched braces for ' + s)
            return parts

        if string == '':
            return

        for part in split(string):
            part = part.strip()
            if part == '':
                continue

            fields = part.split('=')
            if len(fields) < 2:
                raise ConfigError('Expecting key=value, got %s' % part)
            key = fields[0].strip()
            arg = '='.join(fields[1:]).strip()
            if arg.startswith('{') and arg.endswith('}'):
                arg = arg[1:-1].strip()
            self[key] = arg

    def sections(self, default=None):
        """Group dotted keys by section: {'train': {'lr': '1e-3'}}.
        Keys without a dot go to `default`."""

        grouped = {}
        for key, val in self.items():
            if '.' in key:
                section, name = key.split('.', 1)
            elif default is not None:
                section, name = default, key
            else:
                raise ConfigError('Expecting section.key, got %s' % key)
            grouped.setdefault(section, {})[name] = val
        return grouped
