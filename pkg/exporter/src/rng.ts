/** Small deterministic PRNG so verification inputs are reproducible. */

export function mulberry32(seed: number): () => number {
    let state = seed >>> 0;
    return () => {
        state = (state + 0x6d2b79f5) >>> 0;
        let t = state;
        t = Math.imul(t ^ (t >>> 15), t | 1);
        t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
        return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    };
}

/** Uniform samples in [-1, 1). */
export function uniformVector(rand: () => number, n: number): Float64Array {
    const out = new Float64Array(n);
    for (let i = 0; i < n; i++) {
        out[i] = 2 * rand() - 1;
    }
    return out;
}
