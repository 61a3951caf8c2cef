# -*- coding: utf-8 -*-

import os.path
from configparser import ConfigParser, Error as ConfigParserError

from errors import ConfigError

SECTION = 'neurograph'


def format_value(value):
    """Text form of a config value; floats keep every bit."""
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ','.join(format_value(item) for item in value)
    return str(value)


def parse_flat(text):
    """Parse flat 'key=value' lines (no section header) into a dict."""
    parser = ConfigParser(interpolation=None, delimiters=('=',),
                          comment_prefixes=('#',))
    parser.optionxform = str
    try:
        parser.read_string('[{0}]\n{1}'.format(SECTION, text))
    except ConfigParserError as exc:
        raise ConfigError('Malformed config: {0}'.format(exc))
    return dict(parser.items(SECTION))


class ConfigStore:
    """
    Key value config storage. Basically a wrapper around dict featuring
    flat key=value persistence, (re)loading from file and restoring to
    defaults. Keys outside the defaults are rejected.
    """
    def __init__(self, file_path='', defaults=None):
        self._file_path = file_path
        self._defaults = dict(defaults or {})
        self._settings = {}

        if self._file_path and os.path.exists(self._file_path):
            self.reload()
        else:
            self.restore_defaults()

    @classmethod
    def load(cls, file_path, defaults):
        """Load an existing file; a missing file is an error."""
        if not os.path.isfile(file_path):
            raise ConfigError('No such config file: {0}'.format(file_path))
        return cls(file_path, defaults)

    @classmethod
    def from_text(cls, text, defaults):
        store = cls(defaults=defaults)
        store.update(parse_flat(text))
        return store

    def reload(self):
        """Reload settings"""
        self.restore_defaults()
        with open(self._file_path, 'rt') as config_file:
            self.update(parse_flat(config_file.read()))

    def persist(self, file_path=None):
        """Persist settings"""
        with open(file_path or self._file_path, 'wt',
                  newline='\n') as config_file:
            config_file.write(self.to_text())

    def restore_defaults(self):
        """Restore settings to default"""
        self._settings = dict(self._defaults)

    def update(self, values):
        for key, val in values.items():
            self[key] = val

    def to_text(self):
        return ''.join('{0}={1}\n'.format(key, format_value(val))
                       for key, val in self._settings.items())

    def items(self):
        return self._settings.items()

    def __contains__(self, key):
        return key in self._settings

    def __getitem__(self, key):
        """Get item"""
        return self._settings[key]

    def __setitem__(self, key, val):
        """Set item"""
        if self._defaults and key not in self._defaults:
            raise ConfigError('Unknown config key: {0}'.format(key))
        self._settings[key] = val
