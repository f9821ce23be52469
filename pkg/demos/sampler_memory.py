"""Compare peak latent-cache memory: streaming sampler vs sliding window.

The streaming sampler keeps one cached latent per in-flight clip, so its
peak is flat in clip length; a sliding-window loader materializes whole
clips and grows linearly. No trained weights needed.

    python demos/sampler_memory.py
"""

from streamvid.evaluate import memory_benchmark


def main() -> None:
    lengths = [2, 4, 8, 16, 32]
    print(f"{'clip length':>12} {'streaming (B)':>14} {'sliding window (B)':>19}")
    for n in lengths:
        s = memory_benchmark("streaming", n)
        w = memory_benchmark("sliding_window", n)
        print(f"{n:>12} {s:>14} {w:>19}")


if __name__ == "__main__":
    main()
