#!/usr/bin/env python3
"""Regenerates the demo repository under fixtures/local from fixtures/src.

Entry files are written in the store's canonical JSON form (sorted keys,
compact separators, trailing LF) so they byte-match what the tool itself
would write.
"""

import hashlib
import json
import pathlib
import shutil

HERE = pathlib.Path(__file__).resolve().parent
LOCAL = HERE / "local"

CREATED_AT = 1735689600  # fixed, keeps regeneration reproducible

ENTRIES = []


def canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def add_entry(kind, uid, alias, tags, meta, payload=None):
    ENTRIES.append((kind, uid, alias, tags, meta, payload or {}))


def main():
    tool_sha = hashlib.sha256((HERE / "src" / "tool.sh").read_bytes()).hexdigest()

    add_entry(
        "program",
        "a1b2c3d4e5f60001",
        "hello-bench",
        ["demo", "bench"],
        {"description": "fixed-seed xorshift loop printing metrics JSON", "lang": "c"},
        payload={"main.c": HERE / "src" / "main.c"},
    )

    add_entry(
        "soft",
        "a1b2c3d4e5f60002",
        "compiler.cc",
        ["descriptor", "compiler"],
        {
            "soft_descriptor": {
                "soft_name": "compiler.cc",
                "candidates": ["gcc", "cc", "clang", "icc"],
                "extra_search_dirs": [],
                "version_args": ["--version"],
                "version_pattern": "([0-9]+\\.[0-9]+\\.[0-9]+)",
                "env": [["CC", "${INSTALL_PATH}"]],
            }
        },
    )

    add_entry(
        "pipeline",
        "a1b2c3d4e5f60003",
        "hello-bench",
        ["demo", "bench"],
        {
            "pipeline": {
                "program": "hello-bench",
                "dependencies": [
                    {"soft": "compiler.cc", "role": "compiler", "min": "4.0"}
                ],
                "compile": {
                    "command": "${dep:compiler} ${choice:opt} ${choice:unroll}"
                    " -o ${scratch}/bench ${data}/main.c",
                    "artifact": "bench",
                },
                "run": {
                    "command": "${artifact:bench} ${choice:iterations}",
                    "repetitions": 3,
                    "metrics": "stdout",
                    "functional_keys": ["checksum", "ops"],
                    "performance_keys": [],
                },
                "choices": {
                    "iterations": "60000000",
                    "opt": "-O2",
                    "unroll": "",
                },
            },
            "tuning": {
                "dimensions": [
                    {"key": "opt", "values": ["-O1", "-O2", "-O3"]},
                    {"key": "unroll", "values": ["", "-funroll-loops"]},
                ],
                "strategy": "exhaustive",
                "objectives": [
                    {
                        "metric": "wall_time_s",
                        "direction": "minimize",
                        "statistic": "mean",
                    }
                ],
            },
        },
    )

    add_entry(
        "package",
        "a1b2c3d4e5f60004",
        "hello-tool",
        ["demo"],
        {
            "package": {
                "soft_name": "tool.hello",
                "version": "1.0.0",
                "source": {"path": "tool.sh", "sha256": tool_sha},
                "steps": [
                    "cp ${ARTIFACT} ${PREFIX}/hello-tool",
                    "chmod +x ${PREFIX}/hello-tool",
                ],
                "env": [["HELLO_TOOL", "${PREFIX}/hello-tool"]],
            }
        },
        payload={"tool.sh": HERE / "src" / "tool.sh"},
    )

    if LOCAL.exists():
        shutil.rmtree(LOCAL)

    indexes = {}
    for kind, uid, alias, tags, meta, payload in ENTRIES:
        entry_dir = LOCAL / kind / uid
        entry_dir.mkdir(parents=True)
        (entry_dir / "meta.json").write_text(canonical(meta))
        (entry_dir / "entry.json").write_text(
            canonical(
                {
                    "alias": alias,
                    "created_at": CREATED_AT,
                    "tags": sorted(tags),
                    "uid": uid,
                }
            )
        )
        for name, src in payload.items():
            shutil.copyfile(src, entry_dir / name)
        if alias:
            indexes.setdefault(kind, {})[alias] = uid

    for kind, index in indexes.items():
        lines = "".join(f"{alias} {uid}\n" for alias, uid in sorted(index.items()))
        (LOCAL / kind / "alias-index").write_text(lines)

    (HERE / "repos.json").write_text(
        canonical({"repos": [{"name": "local", "root": "local"}]})
    )
    print(f"regenerated {LOCAL}")


if __name__ == "__main__":
    main()
