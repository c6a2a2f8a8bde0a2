/**
 * Counter-based deterministic PRNG.
 *
 * Each stream is keyed by a path string (seed/purpose/frame/pass); the
 * i-th draw is SplitMix64(key + i * GAMMA), so draws depend only on
 * (key, i) and identical paths reproduce identical sequences on any
 * platform.
 */

const MASK64 = (1n << 64n) - 1n;
const GAMMA = 0x9e3779b97f4a7c15n;

/** FNV-1a 64-bit hash of a UTF-8 string. */
export function fnv1a64(text: string): bigint {
  let hash = 0xcbf29ce484222325n;
  const bytes = Buffer.from(text, 'utf-8');
  for (const b of bytes) {
    hash ^= BigInt(b);
    hash = (hash * 0x100000001b3n) & MASK64;
  }
  return hash;
}

function splitmix64(x: bigint): bigint {
  let z = (x + GAMMA) & MASK64;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  return (z ^ (z >> 31n)) & MASK64;
}

export class CounterRng {
  private readonly key: bigint;
  private counter: bigint;

  constructor(...path: Array<string | number>) {
    this.key = fnv1a64(path.map(String).join('/'));
    this.counter = 0n;
  }

  /** Uniform double in [0, 1) with 53 bits of precision. */
  next(): number {
    const word = splitmix64((this.key + this.counter * GAMMA) & MASK64);
    this.counter += 1n;
    return Number(word >> 11n) / 9007199254740992; // 2^53
  }

  uniform(lo: number, hi: number): number {
    return lo + (hi - lo) * this.next();
  }

  bernoulli(p: number): boolean {
    return this.next() < p;
  }
}
