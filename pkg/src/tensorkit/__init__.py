""" Dense third-order tensor algebra and the T3B1 tensor file format """

VERSION = {
    'major': 0,
    'minor': 1,
    'micro': 0}


def get_version_string():
    version = '{major}.{minor}.{micro}'.format(**VERSION)
    return version

__version__ = get_version_string()
