"""Writes the scripted LLM transcripts and the AR(2) run config used by tests."""
import json
import pathlib

FIX = pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures"


def entry(reply, latency=1.5):
    return {"prompt_hash": "", "prompt_text": "", "raw_reply": reply, "latency": latency,
            "timestamp": "2024-06-11T00:00:00Z"}


def reply(config):
    body = dict(config)
    body["reasoning"] = {k: "adjusted toward the best region of the history" for k in config}
    return json.dumps(body)


def main():
    oracle = json.loads((FIX / "oracle_config.json").read_text())["config"]
    with open(FIX / "oracle_transcript.jsonl", "w") as f:
        f.write(json.dumps(entry(reply(oracle))) + "\n")

    base = dict(oracle)
    bad = [
        '{"lag": 8, "lag": 12, "hidden_size": 32}',
        "I would go with a larger network and a smaller learning rate.",
        '{"lag": 8} {"lag": 12}',
        reply({**base, "lr": "−0.001"}),
        reply({k: v for k, v in base.items() if k != "optimizer"}),
        reply({**base, "momentum": 0.9}),
        '```json\n{"lag": 8,\n```',
        reply({**base, "epochs": 10.5}),
        reply({**base, "optimizer": "Lion"}),
        json.dumps({k: v for k, v in base.items()}),
        reply({**base, "batch_size": 100}),
        reply(base) + " Let me know if you need more.",
        "[]",
        reply({**base, "dropout": 1.5}),
        '{"hyperparameters": ' + reply(base) + "}",
    ]
    with open(FIX / "malformed_transcript.jsonl", "w") as f:
        for r in bad:
            f.write(json.dumps(entry(r)) + "\n")

    run = {
        "dataset": "ar2.csv",
        "search_space": json.loads((FIX / "compact_space.json").read_text()),
        "seed": 0,
        "trust_region_radius": 1.0,
        "transcript": "oracle_transcript.jsonl",
        "replay_mode": "lenient",
        "output_dir": "run",
    }
    (FIX / "ar2_run.json").write_text(json.dumps(run, indent=2) + "\n")


if __name__ == "__main__":
    main()
