#!/usr/bin/env python3
"""Regenerates the recorded-response fixture corpus under corpus/responses and its manifests."""
import os, random, json, pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
random.seed(7)
SIG = "fn state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, buffer_history_s) {"
BASE_ROWS = """        BITRATES_KBPS[last_level] / max(BITRATES_KBPS),
        buffer_s / 10.0,
        throughput_mbps / 8.0,
        download_time_s / 10.0,
        next_chunk_sizes_bytes / 1000000.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,"""

def prog(pre, rows, imports=""):
    body = imports + SIG + "\n" + pre + "    return [\n" + rows + "\n    ];\n}\n"
    return body

clean = [
 ("Throughput variability helps separate stable links from bursty ones, so I add the standard deviation of the recent throughput as a row.",
  prog("    let spread = std(throughput_mbps);\n", BASE_ROWS + "\n        spread / 8.0,")),
 ("A short moving average filters measurement noise before the policy sees it.",
  prog("", BASE_ROWS + "\n        signal.moving_average(throughput_mbps, 3) / 8.0,", "import signal;\n\n")),
 ("The buffer trend matters more than its level when the link degrades. I include the regression slope of the buffer history.",
  prog("    let trend = stats.slope(buffer_history_s);\n", BASE_ROWS + "\n        clip(trend / 4.0, -1.0, 1.0),", "import stats;\n\n")),
 ("Throughput scaled by the top rung of the ladder makes the feature ladder-independent.",
  prog("    let top_mbps = max(BITRATES_KBPS) / 1000.0;\n", """        BITRATES_KBPS[last_level] / max(BITRATES_KBPS),
        buffer_s / BUFFER_CAP_S,
        clip(throughput_mbps / (2.0 * top_mbps), 0.0, 10.0),
        download_time_s / 10.0,
        next_chunk_sizes_bytes / 1000000.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,""")),
 ("Log-compressing throughput keeps high-bandwidth samples from dominating.",
  prog("", """        BITRATES_KBPS[last_level] / max(BITRATES_KBPS),
        buffer_s / 10.0,
        log1p(throughput_mbps) / 5.0,
        download_time_s / 10.0,
        next_chunk_sizes_bytes / 1000000.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,""")),
 ("I estimate the time to download each candidate chunk at the recent harmonic-mean throughput, normalized by the chunk duration.",
  prog("""    let recent = tail(throughput_mbps, 5);
    let total = 0.0;
    let count = 0;
    for v in recent {
        if v > 0 {
            total += 1.0 / v;
            count += 1;
        }
    }
    let estimate = 1.0;
    if count > 0 {
        estimate = count / total;
    }
    let eta = next_chunk_sizes_bytes * 8.0 / 1000000.0 / max(estimate, 0.1) / CHUNK_DURATION_S;
""", BASE_ROWS + "\n        clip(eta, 0.0, 20.0) / 20.0,")),
 ("Exponential smoothing with a slower factor gives a more conservative bandwidth estimate.",
  prog("    let slow = signal.ema(throughput_mbps, 0.25);\n", BASE_ROWS + "\n        slow / 8.0,", "import signal;\n\n")),
 ("The last bitrate is encoded as a normalized ladder index instead of kbps.",
  prog("", """        last_level / (len(BITRATES_KBPS) - 1),
        buffer_s / 10.0,
        throughput_mbps / 8.0,
        download_time_s / 10.0,
        next_chunk_sizes_bytes / 1000000.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,""")),
 ("The buffer history itself is a useful signal, scaled to seconds over ten.",
  prog("", BASE_ROWS + "\n        buffer_history_s / 10.0,")),
 ("Median throughput is robust to single outliers.",
  prog("", BASE_ROWS + "\n        median(throughput_mbps) / 8.0,")),
 ("A bounded tanh compression of throughput keeps every feature in a small range.",
  prog("", """        BITRATES_KBPS[last_level] / max(BITRATES_KBPS),
        tanh(buffer_s / 20.0),
        tanh(throughput_mbps / 8.0),
        tanh(download_time_s / 10.0),
        next_chunk_sizes_bytes / 1000000.0,
        min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS,""")),
 ("Download time differences highlight sudden slowdowns.",
  prog("    let change = pad_left(diff(download_time_s), HISTORY_LEN);\n", BASE_ROWS + "\n        clip(change / 10.0, -5.0, 5.0),")),
 ("The buffer headroom relative to the cap tells the agent how much risk it can afford.",
  prog("", BASE_ROWS + "\n        (BUFFER_CAP_S - buffer_s) / BUFFER_CAP_S,")),
 ("The fraction of playback already streamed complements the remaining chunk count.",
  prog("    let played = 1.0 - min(chunks_remaining, TOTAL_CHUNKS) / TOTAL_CHUNKS;\n", BASE_ROWS + "\n        played,")),
 ("Chunk sizes relative to the smallest option show the relative cost of each rung.",
  prog("    let smallest = max(next_chunk_sizes_bytes[0], 1.0);\n", BASE_ROWS + "\n        clip(next_chunk_sizes_bytes / smallest, 0.0, 50.0) / 50.0,")),
 ("Throughput z-scores against the recent window capture relative changes.",
  prog("    let spread = std(throughput_mbps);\n    let centered = throughput_mbps - mean(throughput_mbps);\n    let scaled = centered / (spread + 1.0);\n", BASE_ROWS + "\n        clip(scaled, -5.0, 5.0),")),
 ("A second-order polynomial fit of throughput predicts the next sample.",
  prog("    let coeffs = numeric.polyfit(throughput_mbps, 1);\n    let forecast = numeric.polyval(coeffs, len(throughput_mbps));\n",
       BASE_ROWS + "\n        clip(forecast, 0.0, 200.0) / 200.0,", "import numeric;\n\n")),
 ("Peak recent throughput bounds the achievable bitrate.",
  prog("", BASE_ROWS + "\n        max(throughput_mbps) / 8.0,\n        min(throughput_mbps) / 8.0,")),
]

unnormalized = [
 ("Raw chunk sizes keep full resolution.", prog("", BASE_ROWS.replace("next_chunk_sizes_bytes / 1000000.0", "next_chunk_sizes_bytes"))),
 ("Buffer in milliseconds gives finer granularity.", prog("", BASE_ROWS.replace("buffer_s / 10.0", "buffer_s * 1000.0"))),
 ("Throughput in kbps matches the ladder units.", prog("", BASE_ROWS.replace("throughput_mbps / 8.0", "throughput_mbps * 1000.0"))),
 ("The chunk size in bits lines up with throughput in bits per second.", prog("", BASE_ROWS + "\n        next_chunk_sizes_bytes * 8.0 / 1000.0,")),
 ("An exponential of throughput emphasizes high-bandwidth regimes.", prog("", BASE_ROWS + "\n        exp(throughput_mbps),")),
 ("The last bitrate in kbps is the most direct encoding.", prog("", BASE_ROWS.replace("BITRATES_KBPS[last_level] / max(BITRATES_KBPS)", "BITRATES_KBPS[last_level]"))),
 ("Remaining playback time in seconds is easier to interpret.", prog("", BASE_ROWS + "\n        chunks_remaining * CHUNK_DURATION_S,")),
 ("Throughput per second of download time measures link efficiency.", prog("    let ratio = throughput_mbps / max(download_time_s, 0.01);\n", BASE_ROWS + "\n        ratio,")),
 ("Cumulative chunk sizes show the cost of climbing the ladder.", prog("", BASE_ROWS + "\n        cumsum(next_chunk_sizes_bytes) / 100000.0,")),
 ("Squared throughput approximates link capacity energy.", prog("", BASE_ROWS + "\n        throughput_mbps * throughput_mbps,")),
 ("Buffer times throughput estimates bits in flight.", prog("", BASE_ROWS + "\n        buffer_s * throughput_mbps,")),
 ("Chunk sizes in kilobytes are a compact unit.", prog("", BASE_ROWS.replace("next_chunk_sizes_bytes / 1000000.0", "next_chunk_sizes_bytes / 1000.0"))),
]

def fenced(text, code):
    return text + "\n\n```\n" + code + "```\n"

broken_code = [
 ("Adds a buffer ratio.", SIG + "\n    let ratio = buffer_s / BUFFER_CAP_S\n    return [ratio, throughput_mbps / 8.0;\n}\n"),
 ("Python-style rewrite.", "def state(throughput_mbps, download_time_s, next_chunk_sizes_bytes, buffer_s, chunks_remaining, last_level, buffer_history_s):\n    return [buffer_s / 10.0]\n"),
 ("Uses a smoothed throughput.", prog("", BASE_ROWS + "\n        smoothed_throughput / 8.0,")),
 ("NumPy makes the statistics easy.", prog("", BASE_ROWS + "\n        numpy.mean(throughput_mbps) / 8.0,", "import numpy;\n\n")),
 ("Reads the network interface counters.", prog("", BASE_ROWS, "import os;\n\n")),
 ("Renamed for clarity.", prog("", BASE_ROWS).replace("fn state(", "fn features(")),
 ("Labels each feature.", prog("", BASE_ROWS.replace("buffer_s / 10.0", "\"buffer\""))),
 ("Unbounded search for the best rung.", prog("    let i = 0;\n    while true {\n        i += 1;\n    }\n", BASE_ROWS)),
 ("Precomputes a large lookup table.", prog("    let table = zeros(100000000);\n", BASE_ROWS)),
 ("Skips the history when it is empty.", prog("    if throughput_mbps {\n        return [buffer_s / 10.0];\n    }\n", BASE_ROWS)),
 ("Looks ahead two rungs.", prog("    let next = BITRATES_KBPS[last_level + 10] / max(BITRATES_KBPS);\n", BASE_ROWS + "\n        next,")),
 ("Uses only the most relevant recent samples.", prog("    let window = tail(throughput_mbps, chunks_remaining - 1000);\n", BASE_ROWS + "\n        window / 8.0,")),
 ("A compact two-argument version.", "fn state(throughput_mbps, buffer_s) {\n    return [throughput_mbps / 8.0, buffer_s / 10.0];\n}\n"),
 ("Kalman-filtered bandwidth.", prog("    let est = stats.kalman(throughput_mbps);\n", BASE_ROWS + "\n        est / 8.0,", "import stats;\n\n")),
 ("Returns nothing when the session ends.", SIG + "\n    return [];\n}\n"),
 ("Divides rows by the ladder.", prog("    let x = throughput_mbps + \"mbps\";\n", BASE_ROWS)),
]

no_fence = [
 "I would normalize the throughput by the maximum bitrate and keep the buffer in seconds divided by ten. The remaining rows stay as in the original design.",
 "Here is the updated state function:\n\n```\n" + SIG + "\n    return [buffer_s / 10.0,\n",
 "The original state is already well normalized, so I recommend keeping it unchanged. Adding features would increase the input dimension without clear benefit.",
 "Improved design:\n\n    fn state(...) {\n        return [buffer_s / 10.0];\n    }\n\nThis keeps only the buffer level.",
]

items = []
for t, c in clean: items.append(("clean", fenced("Reasoning: " + t, c)))
for t, c in unnormalized: items.append(("unnormalized", fenced("Reasoning: " + t, c)))
for t, c in broken_code: items.append(("broken", fenced("Reasoning: " + t, c)))
for t in no_fence: items.append(("no_fence", t + "\n"))
assert len(items) == 50, len(items)
random.shuffle(items)
out = str(ROOT) + "/corpus/responses/state"
os.makedirs(out, exist_ok=True)
manifest = {"total": 50, "compilable": 30, "well_normalized": 18, "batch_id": "state-recorded-s0", "responses": []}
for i, (cat, text) in enumerate(items):
    open(f"{out}/{i:04d}.txt", "w").write(text)
    manifest["responses"].append({"index": i, "category": cat})
os.makedirs(str(ROOT) + "/corpus/fixtures", exist_ok=True)
json.dump(manifest, open(str(ROOT) + "/corpus/fixtures/state_manifest.json", "w"), indent=2)

# Networks.
NET = "import nn;\n\nfn network(state_channels, state_width, n_actions) {\n%s\n}\n"
nets_ok = [
 ("A narrower convolution trains faster.", '    return nn.actor_critic(nn.conv1d(32, 4, "relu"), [64], "relu", n_actions);'),
 ("Two hidden layers add depth.", '    return nn.actor_critic(nn.conv1d(64, 4, "relu"), [64, 32], "relu", n_actions);'),
 ("A dense encoder over the flattened state.", '    return nn.actor_critic(nn.dense(64, "relu"), [64], "relu", n_actions);'),
 ("A GRU summarizes the history.", '    return nn.actor_critic(nn.gru(32), [32], "relu", n_actions);'),
 ("An LSTM keeps longer memory.", '    return nn.actor_critic(nn.lstm(32), [32], "tanh", n_actions);'),
 ("A plain recurrent layer is cheap.", '    return nn.actor_critic(nn.rnn(32), [32], "relu", n_actions);'),
 ("Parallel convolution and recurrent branches.", '    let enc = nn.parallel([nn.conv1d(32, 3, "relu"), nn.gru(16)]);\n    return nn.actor_critic(enc, [64], "relu", n_actions);'),
 ("Leaky rectifiers avoid dead units.", '    return nn.actor_critic(nn.conv1d(32, 4, "leaky_relu"), [64], "leaky_relu", n_actions);'),
 ("ELU activations smooth the gradients.", '    return nn.actor_critic(nn.conv1d(32, 2, "elu"), [64], "elu", n_actions);'),
 ("A shared trunk halves the parameter count.", '    return nn.actor_critic(nn.conv1d(32, 4, "relu"), [64], "relu", n_actions, true);'),
 ("Flattened input with tanh hidden units.", '    return nn.actor_critic(nn.flatten(), [64, 64], "tanh", n_actions);'),
 ("Kernel of three captures short trends.", '    return nn.actor_critic(nn.conv1d(48, 3, "relu"), [48], "relu", n_actions);'),
 ("No hidden layer, direct heads.", '    return nn.actor_critic(nn.conv1d(32, 4, "relu"), [], "relu", n_actions);'),
 ("Dense encoder with sigmoid gating.", '    return nn.actor_critic(nn.dense(32, "sigmoid"), [32], "relu", n_actions);'),
 ("Wider GRU.", '    return nn.actor_critic(nn.gru(64), [32], "relu", n_actions);'),
]
nets_bad = [
 ("Fixed output count.", '    return nn.actor_critic(nn.conv1d(32, 4, "relu"), [64], "relu", 4);'),
 ("PyTorch version.", '    return torch.nn.Sequential();'),
 ("Unknown activation.", '    return nn.actor_critic(nn.conv1d(32, 4, "swish"), [64], "swish", n_actions);'),
 ("Returns the encoder only.", '    return nn.conv1d(32, 4, "relu");'),
 ("Huge layer for capacity.", '    return nn.actor_critic(nn.dense(4096, "relu"), [4096, 4096], "relu", n_actions);'),
]
import itertools
_acts = ["relu", "tanh", "leaky_relu", "elu"]
_variants = []
for f, k, h, a in itertools.product([16, 24, 40], [2, 3, 5], [[32], [48, 24]], _acts):
    _variants.append((f, k, h, a))
random.Random(11).shuffle(_variants)
for f, k, h, a in _variants[:22]:
    hid = "[" + ", ".join(str(x) for x in h) + "]"
    nets_ok.append((f"{f} filters of width {k} with {a} hidden units {hid}.",
                    f'    return nn.actor_critic(nn.conv1d({f}, {k}, "{a}"), {hid}, "{a}", n_actions);'))
nets_bad += [
 ("Negative filter count.", '    return nn.actor_critic(nn.conv1d(-8, 4, "relu"), [64], "relu", n_actions);'),
 ("Missing semicolon.", '    return nn.actor_critic(nn.gru(32), [32], "relu", n_actions)'),
 ("Fractional kernel width.", '    return nn.actor_critic(nn.conv1d(32, 2.5, "relu"), [32], "relu", n_actions);'),
 ("Hidden sizes as a string.", '    return nn.actor_critic(nn.conv1d(32, 4, "relu"), "64", "relu", n_actions);'),
 ("Calls an undefined helper.", '    return nn.actor_critic(nn.transformer(4), [64], "relu", n_actions);'),
 ("Zero-width hidden layer.", '    return nn.actor_critic(nn.conv1d(32, 4, "relu"), [0], "relu", n_actions);'),
]
nitems = [("ok", fenced("Reasoning: " + t, NET % c)) for t, c in nets_ok] + [("broken", fenced("Reasoning: " + t, NET % c)) for t, c in nets_bad] + [("broken", "Reasoning: I would use a deeper GRU with dropout, but the code is left as an exercise.\n"), ("broken", "A transformer encoder over the history would help.\n")]
random.shuffle(nitems)
nout = str(ROOT) + "/corpus/responses/network"
os.makedirs(nout, exist_ok=True)
nman = {"total": len(nitems), "compilable": len(nets_ok), "batch_id": "network-recorded-s0", "responses": []}
for i, (cat, text) in enumerate(nitems):
    open(f"{nout}/{i:04d}.txt", "w").write(text)
    nman["responses"].append({"index": i, "category": cat})
json.dump(nman, open(str(ROOT) + "/corpus/fixtures/network_manifest.json", "w"), indent=2)
