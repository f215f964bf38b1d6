/**
 * Request-token source. Tokens only need to be unique per logical
 * submission; crypto.randomUUID where available, a counter-stamped random
 * fallback otherwise (older WebViews).
 */

let counter = 0;

export function freshToken(): string {
  counter += 1;
  const cryptoObj = globalThis.crypto as Crypto | undefined;
  if (cryptoObj && "randomUUID" in cryptoObj) {
    return cryptoObj.randomUUID();
  }
  const noise = Math.random().toString(36).slice(2, 12);
  return `tok-${Date.now()}-${counter}-${noise}`;
}
