// Table cell formatting: rates print at 2 decimals, missing values as an
// em-dash.

export const DASH = '—';

export function rateCell(value: number | undefined, n: number | undefined): string {
  if (value === undefined || n === undefined || n === 0) return DASH;
  return value.toFixed(2);
}

export function countCell(n: number | undefined): string {
  return n === undefined || n === 0 ? DASH : String(n);
}
