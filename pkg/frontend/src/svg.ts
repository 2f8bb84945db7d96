/**
 * Small deterministic SVG builders: fixed layout, fixed precision, no
 * randomness, so identical inputs reproduce identical bytes.
 */

export const COLORS = ["#4361ee", "#e63946", "#2d6a4f", "#f4a261", "#7b2d8e", "#457b9d"];

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function fmt(v: number, places = 1): string {
  return v.toFixed(places);
}

export function niceMax(maxValue: number): number {
  if (maxValue <= 0) return 1;
  const mag = Math.pow(10, Math.floor(Math.log10(maxValue)));
  for (const m of [1, 2, 2.5, 5, 10]) {
    if (m * mag >= maxValue) return m * mag;
  }
  return 10 * mag;
}

export interface Panel {
  title: string;
  yLabel: string;
  bars: { label: string; value: number | undefined; color: string }[];
  valuePlaces?: number;
}

/** One axis-and-bars panel at the given origin; undefined values render as a
 * labeled gap. */
export function barPanel(p: Panel, x0: number, y0: number, w: number, h: number): string {
  const mt = 26, mb = 34, ml = 44, mr = 8;
  const pw = w - ml - mr;
  const ph = h - mt - mb;
  const values = p.bars.map((b) => b.value).filter((v): v is number => v !== undefined);
  const yMax = niceMax(Math.max(0, ...values));
  const places = p.valuePlaces ?? 3;
  const yOf = (v: number) => y0 + mt + ph - (v / yMax) * ph;

  let s = "";
  s += `<text x="${x0 + ml}" y="${y0 + 14}" font-size="11" font-weight="600" fill="#222">${esc(p.title)}</text>\n`;
  for (let i = 0; i <= 4; i++) {
    const v = (yMax * i) / 4;
    const y = yOf(v);
    s += `<line x1="${x0 + ml}" y1="${fmt(y)}" x2="${x0 + ml + pw}" y2="${fmt(y)}" stroke="#eee"/>\n`;
    s += `<text x="${x0 + ml - 4}" y="${fmt(y + 3)}" font-size="8" fill="#666" text-anchor="end">${fmt(v, 2)}</text>\n`;
  }
  s += `<line x1="${x0 + ml}" y1="${y0 + mt}" x2="${x0 + ml}" y2="${y0 + mt + ph}" stroke="#999"/>\n`;
  s += `<line x1="${x0 + ml}" y1="${y0 + mt + ph}" x2="${x0 + ml + pw}" y2="${y0 + mt + ph}" stroke="#999"/>\n`;
  s += `<text x="${x0 + 12}" y="${y0 + mt + ph / 2}" font-size="9" fill="#444" transform="rotate(-90 ${x0 + 12} ${y0 + mt + ph / 2})" text-anchor="middle">${esc(p.yLabel)}</text>\n`;

  const n = p.bars.length;
  const slot = pw / Math.max(1, n);
  const barW = Math.min(46, slot * 0.62);
  p.bars.forEach((bar, i) => {
    const cx = x0 + ml + slot * i + slot / 2;
    if (bar.value === undefined) {
      s += `<text x="${fmt(cx)}" y="${fmt(y0 + mt + ph - 6)}" font-size="9" fill="#999" text-anchor="middle">n/a</text>\n`;
    } else {
      const top = yOf(bar.value);
      const height = y0 + mt + ph - top;
      s += `<rect x="${fmt(cx - barW / 2)}" y="${fmt(top)}" width="${fmt(barW)}" height="${fmt(height)}" fill="${bar.color}"/>\n`;
      s += `<text x="${fmt(cx)}" y="${fmt(top - 3)}" font-size="8" fill="#333" text-anchor="middle">${fmt(bar.value, places)}</text>\n`;
    }
    s += `<text x="${fmt(cx)}" y="${y0 + mt + ph + 12}" font-size="8.5" fill="#333" text-anchor="middle">${esc(bar.label)}</text>\n`;
  });
  return s;
}

export function document(w: number, h: number, title: string, body: string): string {
  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${w} ${h}" font-family="Helvetica, Arial, sans-serif">\n`;
  s += `<rect width="${w}" height="${h}" fill="#fff"/>\n`;
  s += `<text x="${w / 2}" y="18" font-size="13" font-weight="700" fill="#111" text-anchor="middle">${esc(title)}</text>\n`;
  s += body;
  s += `</svg>\n`;
  return s;
}
