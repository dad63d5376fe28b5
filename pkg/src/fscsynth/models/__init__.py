"""Bundled example models (*.pom) and controllers (*.fsc)."""

from importlib import resources


def model_text(name: str) -> str:
    """The contents of a bundled model or controller file.

    `name` may be a full file name or a bare stem; a bare stem is tried
    with the `.pom` and then the `.fsc` extension.
    """
    root = resources.files(__package__)
    tries = [name] if "." in name else [name + ".pom", name + ".fsc"]
    for candidate in tries:
        entry = root.joinpath(candidate)
        if entry.is_file():
            return entry.read_text(encoding="utf-8")
    raise FileNotFoundError(f"no bundled file named {name!r} (tried {tries})")


def model_names() -> list[str]:
    """Names of all bundled files."""
    out = []
    for entry in resources.files(__package__).iterdir():
        if entry.name.endswith((".pom", ".fsc")):
            out.append(entry.name)
    return sorted(out)
