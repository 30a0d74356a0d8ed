import logging
import os
import re

logger = logging.getLogger(__name__)

PLACEHOLDER = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::=?([^}]*))?\}")


def expand_env_vars(content: str, environ=None) -> str:
    """
    Expand ``${VAR}``, ``${VAR:=default}`` and ``${VAR:default}`` placeholders.

    Used on run-config text before YAML parsing, so that e.g.
    ``output_dir: "${SQVI_OUT_DIR:=results}"`` follows the environment.

    :param content: Text containing placeholders.
    :param environ: Mapping to read variables from (defaults to ``os.environ``).
    :return: Text with every placeholder replaced; unset variables without a
        default become the empty string.
    """
    environ = os.environ if environ is None else environ

    def replacer(match):
        name, default = match.group(1), match.group(2)
        if name in environ:
            return environ[name]
        if default is None:
            logger.debug(f"Environment variable {name} is unset and has no default")
            return ""
        return default

    return PLACEHOLDER.sub(replacer, content)
