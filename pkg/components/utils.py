import json
import os

from components.errors import ParseError

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_FILE = os.path.join(BASE_DIR, "system_config.json")

_config_cache = {}


def config_path():
    return os.environ.get("ORGUTIL_CONFIG", CONFIG_FILE)


def load_config(path=None):
    """Reads the central JSON configuration (cached per path)."""
    path = path or config_path()
    if path in _config_cache:
        return _config_cache[path]
    if not os.path.exists(path):
        print(f"❌ Config not found: {path}")
        return {}
    _config_cache[path] = load_json_file(path)
    return _config_cache[path]


def config_section(name, path=None):
    return load_config(path).get(name, {})


def load_json_file(path):
    """Loads a JSON input file, turning decode failures into ParseError with position."""
    try:
        with open(path, "r") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ParseError(path, "file not found")
    except json.JSONDecodeError as e:
        raise ParseError(path, e.msg, line=e.lineno, column=e.colno)


def explicit_seed(cli_seed=None):
    """Seed given on the command line or in ORGUTIL_SEED, else None."""
    if cli_seed is not None:
        return int(cli_seed)
    env_seed = os.environ.get("ORGUTIL_SEED")
    if env_seed:
        return int(env_seed)
    return None


def resolve_seed(cli_seed=None):
    seed = explicit_seed(cli_seed)
    if seed is not None:
        return seed
    return int(config_section("system").get("default_seed", 42))


def repo_path(*parts):
    return os.path.join(BASE_DIR, *parts)
