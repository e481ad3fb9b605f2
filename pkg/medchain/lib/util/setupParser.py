import yaml
import os.path
import medchain.lib.util.exception as exceptions

LINE_KEY = '__line__'
"""Key under which ``LineLoader`` stores the 1-based source line of a mapping"""


# This is a solution provided by Josh Bode in stackoverflow to provide import
# https://stackoverflow.com/questions/528281/how-can-i-include-an-yaml-file-inside-another
class Loader(yaml.SafeLoader):
    """Custom loader class to feature including yaml files inside each other."""

    def __init__(self, stream):
        self._root = os.path.split(getattr(stream, 'name', ''))[0]
        super(Loader, self).__init__(stream)

    def include(self, node):
        filename = os.path.join(self._root, self.construct_scalar(node))
        try:
            with open(filename, 'r') as f:
                return yaml.load(f, self.__class__)
        except IOError:
            raise exceptions.ScenarioParseException("Included file '%s' not found" % filename,
                                                    node.start_mark.line + 1)


Loader.add_constructor('!include', Loader.include)


class LineLoader(Loader):
    """Loader that remembers where every mapping started, so scenario errors can name a line."""

    def construct_mapping(self, node, deep=False):
        mapping = super(LineLoader, self).construct_mapping(node, deep=deep)
        mapping[LINE_KEY] = node.start_mark.line + 1
        return mapping


def load_file(path, loader=Loader):
    """Parse the yaml file at ``path``.

    :param path: File to read
    :type path: str
    :param loader: Loader class to use
    :type loader: type
    :return: Parsed document
    :raises IOError: If the file does not exist
    :raises exceptions.ScenarioParseException: On yaml syntax errors (with line number)
    """
    with open(path) as data_file:
        try:
            return yaml.load(data_file, loader)
        except yaml.MarkedYAMLError as err:
            line = err.problem_mark.line + 1 if err.problem_mark else None
            raise exceptions.ScenarioParseException(str(err.problem or err), line)
        except yaml.YAMLError as err:
            raise exceptions.ScenarioParseException(str(err))


def strip_lines(document):
    """Return a copy of ``document`` without the line markers added by ``LineLoader``."""
    if isinstance(document, dict):
        return dict((k, strip_lines(v)) for k, v in document.items() if k != LINE_KEY)
    if isinstance(document, list):
        return [strip_lines(v) for v in document]
    return document
