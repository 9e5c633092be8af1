import init, { rootsDemo, paretoDemo, unmixDemo } from "./pkg/neuropt_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

function extent(values) {
  let lo = Infinity, hi = -Infinity;
  for (const v of values) {
    if (Number.isFinite(v)) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  }
  return lo < hi ? [lo, hi] : [lo - 1, lo + 1];
}

// Maps data coordinates onto a canvas with a small margin.
function frame(canvas, [x0, x1], [y0, y1]) {
  const ctx = canvas.getContext("2d");
  const m = 30, w = canvas.width - 2 * m, h = canvas.height - 2 * m;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(m, m, w, h);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(x0.toFixed(2), m, canvas.height - 10);
  ctx.fillText(x1.toFixed(2), m + w - 30, canvas.height - 10);
  ctx.fillText(y1.toFixed(2), 2, m + 4);
  ctx.fillText(y0.toFixed(2), 2, m + h);
  return {
    ctx,
    px: (x) => m + ((x - x0) / (x1 - x0)) * w,
    py: (y) => m + h - ((y - y0) / (y1 - y0)) * h,
  };
}

function line(f, xs, ys, color, width = 1.5) {
  f.ctx.strokeStyle = color;
  f.ctx.lineWidth = width;
  f.ctx.beginPath();
  xs.forEach((x, i) => (i ? f.ctx.lineTo(f.px(x), f.py(ys[i])) : f.ctx.moveTo(f.px(x), f.py(ys[i]))));
  f.ctx.stroke();
}

function dots(f, points, color, r = 2) {
  f.ctx.fillStyle = color;
  for (const [x, y] of points) {
    f.ctx.beginPath();
    f.ctx.arc(f.px(x), f.py(y), r, 0, 2 * Math.PI);
    f.ctx.fill();
  }
}

// Runs a demo after the button repaints, reporting errors in the output box.
function wire(button, out, work) {
  $(button).onclick = () => {
    $(out).textContent = "training...";
    setTimeout(() => {
      try {
        $(out).textContent = work();
      } catch (e) {
        $(out).textContent = "error: " + e;
      }
    }, 20);
  };
}

function runRoots() {
  const d = JSON.parse(rootsDemo($("r-f").value, $("r-g").value, num("r-lo"), num("r-hi"), num("r-tol"), 10, num("r-seed")));
  const f = frame($("r-plot"), extent(d.x), extent(d.h.concat(d.h_tilde)));
  line(f, d.x, d.x.map(() => 0), "#bbb", 1);
  line(f, d.x, d.h, "#1f77b4", 2);
  line(f, d.x, d.h_tilde, "#d62728", 1);
  dots(f, d.extracted.map((x) => [x, 0]), "#2ca02c", 2);
  dots(f, d.roots.map((x) => [x, 0]), "#000", 4);
  return `final loss ${d.final_loss.toExponential(2)}\nroots ${d.roots.map((r) => r.toFixed(4)).join(", ") || "none"}\n` +
    "blue: f - g, red: network, green: extracted grid points, black: cluster centres";
}

function runPareto() {
  const n = num("p-n");
  const d = JSON.parse(paretoDemo($("p-name").value, n, num("p-eps"), 2, num("p-seed")));
  // score field on a log scale; x1 runs left to right, x2 bottom to top
  const canvas = $("p-field"), ctx = canvas.getContext("2d");
  const img = ctx.createImageData(n, n);
  const logs = d.score.map((s) => Math.log10(s + 1e-12));
  const [lo, hi] = extent(logs);
  logs.forEach((v, i) => {
    const col = Math.floor(i / n), row = n - 1 - (i % n);
    const t = Math.round((255 * (v - lo)) / (hi - lo));
    const p = 4 * (row * n + col);
    img.data.set([t, t, 255 - t / 2, 255], p);
  });
  const off = new OffscreenCanvas(n, n);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  const all = d.oracle.concat(d.front);
  const f = frame($("p-front"), extent(all.map((p) => p[0])), extent(all.map((p) => p[1])));
  dots(f, d.oracle, "#bbb", 3);
  dots(f, d.front, "#d62728", 2);
  return `left: log10 normalized Fritz John score over the domain (dark is small)\n` +
    `right: objective space, grey brute-force front (${d.oracle.length}), red predicted front (${d.front.length})`;
}

function runUnmix() {
  const d = JSON.parse(unmixDemo(num("u-k"), num("u-f"), num("u-n"), num("u-l"), 3, num("u-seed")));
  const bands = [...Array(d.bands).keys()];
  const f = frame($("u-plot"), [0, d.bands - 1], extent(d.truth.flat().concat(d.estimate.flat())));
  d.truth.forEach((c, j) => line(f, bands, c, COLORS[j % COLORS.length], 2.5));
  d.estimate.forEach((c, j) => {
    f.ctx.setLineDash([5, 4]);
    line(f, bands, c, COLORS[j % COLORS.length], 1.5);
    f.ctx.setLineDash([]);
  });
  return `solid: true end-members, dashed: estimates\n` +
    `MSE ${d.mse.toExponential(2)}  SAD ${d.sad.toExponential(2)}  reconstruction ${d.reconstruction.toExponential(2)}`;
}

await init();
wire("r-run", "r-out", runRoots);
wire("p-run", "p-out", runPareto);
wire("u-run", "u-out", runUnmix);
