import init, { helicopterRun, asvdTracking, biasDecay } from "./pkg/lise_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

// Draw line series on a canvas. Each series is {y, color, dash, label}.
function plot(canvas, t, series, { logY = false, title = "" } = {}) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth, h = canvas.clientHeight;
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const ctx = canvas.getContext("2d");
  ctx.scale(dpr, dpr);
  ctx.clearRect(0, 0, w, h);
  const tf = (v) => (logY ? Math.log10(Math.max(v, 1e-300)) : v);
  let lo = Infinity, hi = -Infinity;
  for (const s of series) for (const v of s.y) if (Number.isFinite(tf(v))) { lo = Math.min(lo, tf(v)); hi = Math.max(hi, tf(v)); }
  if (!(hi > lo)) { hi = lo + 1; lo -= 1; }
  const pad = { l: 50, r: 10, t: 20, b: 20 };
  const x = (s) => pad.l + ((s - t[0]) / (t[t.length - 1] - t[0] || 1)) * (w - pad.l - pad.r);
  const y = (v) => h - pad.b - ((tf(v) - lo) / (hi - lo)) * (h - pad.t - pad.b);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  ctx.fillStyle = "#444";
  ctx.font = "11px system-ui";
  const fmt = (v) => (logY ? "1e" + v.toFixed(1) : v.toPrecision(3));
  ctx.fillText(fmt(hi), 2, pad.t + 8);
  ctx.fillText(fmt(lo), 2, h - pad.b);
  ctx.fillText(`t = ${t[0].toFixed(2)} … ${t[t.length - 1].toFixed(2)}`, pad.l, h - 4);
  ctx.fillText(title, pad.l + 4, pad.t - 6);
  let legendX = w - pad.r - 8;
  for (const s of [...series].reverse()) {
    if (!s.label) continue;
    const width = ctx.measureText(s.label).width;
    legendX -= width + 24;
    ctx.fillStyle = s.color;
    ctx.fillRect(legendX, pad.t - 12, 12, 3);
    ctx.fillText(s.label, legendX + 15, pad.t - 6);
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dash ? [5, 3] : []);
    ctx.lineWidth = 1.3;
    ctx.beginPath();
    s.y.forEach((v, k) => (k ? ctx.lineTo(x(t[k]), y(v)) : ctx.moveTo(x(t[k]), y(v))));
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

function num(id) {
  return Number(document.getElementById(id).value);
}

// Run `work` and report its duration or error in the status element.
function wire(button, status, work) {
  document.getElementById(button).addEventListener("click", () => {
    const el = document.getElementById(status);
    el.className = "status";
    el.textContent = "running…";
    setTimeout(() => {
      const start = performance.now();
      try {
        const note = work();
        el.textContent = `${((performance.now() - start) / 1000).toFixed(2)} s${note ? ", " + note : ""}`;
      } catch (e) {
        el.className = "status error";
        el.textContent = String(e);
      }
    }, 10);
  });
}

function pairs(truth, est, name) {
  return truth.flatMap((y, i) => [
    { y, color: COLORS[i % COLORS.length], label: `${name}${i + 1}` },
    { y: est[i], color: COLORS[i % COLORS.length], dash: true },
  ]);
}

function runHelicopter() {
  const r = JSON.parse(helicopterRun(document.getElementById("heli-filter").value, num("heli-seed"), num("heli-tf")));
  plot(document.getElementById("heli-state"), r.t, pairs(r.x, r.xhat, "x"), { title: "states (solid) and estimates (dashed)" });
  plot(document.getElementById("heli-input"), r.t, pairs(r.d, r.dhat, "d"), { title: "unknown inputs (solid) and estimates (dashed)" });
}

function runTracking() {
  const r = JSON.parse(asvdTracking(num("asvd-rows"), num("asvd-cols"), num("asvd-rank"), num("asvd-seed"), num("asvd-tf")));
  const series = r.direct.flatMap((y, j) => [
    { y, color: COLORS[j % COLORS.length], label: `σ${j + 1}` },
    { y: r.propagated[j], color: COLORS[j % COLORS.length], dash: true },
  ]);
  plot(document.getElementById("asvd-plot"), r.t, series, { title: "direct SVD (solid) and integrated rates (dashed)" });
  return `largest difference ${r.max_abs_difference.toExponential(2)}`;
}

function runBias() {
  const bias = document.getElementById("bias-vec").value.split(",").map(Number);
  const r = JSON.parse(biasDecay(bias, document.getElementById("bias-filter").value));
  const err = r.t.map((_, k) => Math.hypot(...r.x.map((xi, i) => xi[k] - r.xhat[i][k])));
  plot(document.getElementById("bias-plot"), r.t, [
    { y: err, color: COLORS[0], label: "‖x − x̂‖" },
    { y: r.tr_px, color: COLORS[1], label: "tr Pˣ" },
  ], { logY: true, title: "noise-free error and covariance trace (log scale)" });
}

await init();
wire("heli-run", "heli-status", runHelicopter);
wire("asvd-run", "asvd-status", runTracking);
wire("bias-run", "bias-status", runBias);
