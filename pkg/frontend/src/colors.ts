/** Density and signal colors: blue at free flow, red at jam. */

/** Linear blue(0,0,255) -> red(255,0,0) over normalized density [0,1]. */
export function colorForDensity(normalized: number): string {
  const x = Math.min(1, Math.max(0, normalized));
  const r = Math.round(255 * x);
  const b = Math.round(255 * (1 - x));
  return `rgb(${r},0,${b})`;
}

const PHASE_HUES = [145, 200, 265, 325, 25, 85]; // distinct greens-to-warm

/** Signal indicator: green hue per phase; yellow and all-red distinct. */
export function colorForSignal(phase: number, interim: number): string {
  if (interim === 1) return "rgb(240,200,0)"; // yellow
  if (interim === 2) return "rgb(210,30,30)"; // all-red
  const hue = PHASE_HUES[phase % PHASE_HUES.length];
  return `hsl(${hue},85%,45%)`;
}
