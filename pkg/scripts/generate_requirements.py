import os
import sys

try:
    import tomllib
except ImportError:
    try:
        import tomli as tomllib
    except ImportError:
        print("Error: tomllib or tomli is required to run this script.")
        sys.exit(1)

HEADER = "# This file is auto-generated from pyproject.toml{section}. Do not edit directly.\n"


def _write(filename, deps, section=""):
    with open(filename, "w") as f:
        f.write(HEADER.format(section=section))
        for dep in deps:
            f.write(f"{dep}\n")
    print(f"Successfully generated {filename}")


def main():
    if not os.path.exists("pyproject.toml"):
        print("Error: pyproject.toml not found.")
        sys.exit(1)

    with open("pyproject.toml", "rb") as f:
        data = tomllib.load(f)

    deps = data.get("tool", {}).get("xsigma", {}).get("dependencies")
    if deps is None:
        deps = data.get("project", {}).get("dependencies", [])
    _write("requirements.txt", deps)

    optional_deps = data.get("project", {}).get("optional-dependencies", {})
    for extra, extra_deps in optional_deps.items():
        if extra in ("full", "distributed"):
            continue
        # Self references such as xsigma[test] only combine other extras.
        _write(
            f"requirements-{extra}.txt",
            [d for d in extra_deps if not d.startswith("xsigma[")],
            f" [{extra}]",
        )


if __name__ == "__main__":
    main()
