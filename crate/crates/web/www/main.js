import init, { planView, relaxationCurves, trainingView } from "../pkg/sinkpit_web.js";

const $ = (id) => document.getElementById(id);

function showValue(input, fmt = (v) => v) {
  const span = input.parentElement.querySelector("span");
  if (span) span.textContent = fmt(input.value);
}

function call(fn, ...args) {
  try {
    return JSON.parse(fn(...args));
  } catch (e) {
    return { error: String(e) };
  }
}

function drawPlan() {
  const n = +$("plan-n").value;
  const beta = 10 ** +$("plan-beta").value;
  const k = +$("plan-k").value;
  showValue($("plan-n"));
  showValue($("plan-beta"), () => beta.toPrecision(3));
  showValue($("plan-k"));
  const v = call(planView, n, beta, k, +$("plan-seed").value);
  const info = $("plan-info");
  if (v.error) { info.textContent = v.error; return; }

  const ctx = $("plan-canvas").getContext("2d");
  const size = ctx.canvas.width / n;
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const shade = Math.round(255 * (1 - v.plan[i][j]));
      ctx.fillStyle = `rgb(${shade},${shade},255)`;
      ctx.fillRect(j * size, i * size, size, size);
    }
    ctx.strokeStyle = "#d22";
    ctx.lineWidth = 3;
    ctx.strokeRect((v.optimal[i] - 1) * size + 2, i * size + 2, size - 4, size - 4);
  }
  info.textContent =
    `SinkPIT loss ${v.sinkpit_loss.toFixed(4)}   PIT loss ${v.pit_loss.toFixed(4)}\n` +
    `entropy ${v.entropy.toFixed(4)}   marginal deviation ${v.marginal_deviation.toExponential(2)}\n` +
    `optimal (${v.optimal.join(" ")})   rounded (${v.rounded.join(" ")})   red boxes mark the optimum`;
}

function plotLines(canvas, series, xs, { logX = false, hline = null } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  ctx.clearRect(0, 0, w, h);
  const tx = logX ? Math.log10 : (x) => x;
  const all = series.flatMap((s) => s.ys).concat(hline === null ? [] : [hline]);
  const [y0, y1] = [Math.min(...all), Math.max(...all)];
  const [x0, x1] = [tx(xs[0]), tx(xs[xs.length - 1])];
  const px = (x) => pad + ((tx(x) - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.fillText(y1.toFixed(2), 2, pad + 4);
  ctx.fillText(y0.toFixed(2), 2, h - pad);
  if (hline !== null) {
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(pad, py(hline));
    ctx.lineTo(w - pad, py(hline));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  series.forEach((s, k) => {
    const sx = s.xs || xs;
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.ys.forEach((y, i) => (i ? ctx.lineTo(px(sx[i]), py(y)) : ctx.moveTo(px(sx[i]), py(y))));
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, w - pad - 160, pad + 14 + 14 * k);
  });
}

function drawCurves() {
  showValue($("curves-n"));
  const c = call(relaxationCurves, +$("curves-n").value, +$("curves-seed").value, 200, 60);
  const info = $("curves-info");
  if (c.error) { info.textContent = c.error; return; }
  // Plot against the inverse temperature: beta for SinkPIT, 1/gamma for ProbPIT.
  const inv = c.gammas.map((g) => 1 / g);
  const order = inv.map((_, i) => inv.length - 1 - i);
  plotLines(
    $("curves-canvas"),
    [
      { label: "SinkPIT vs beta", ys: c.sinkpit, color: "#2a6" },
      { label: "ProbPIT vs 1/gamma", ys: order.map((i) => c.probpit[i]), xs: order.map((i) => inv[i]), color: "#a3c" },
    ],
    c.betas,
    { logX: true, hline: c.pit_loss },
  );
  info.textContent = `dashed: exact PIT loss ${c.pit_loss.toFixed(4)}; horizontal axis is log-scaled`;
}

function runTraining() {
  showValue($("train-n"));
  const info = $("train-info");
  info.textContent = "training...";
  setTimeout(() => {
    const t = call(trainingView, +$("train-n").value, +$("train-epochs").value, +$("train-seed").value);
    if (t.error) { info.textContent = t.error; return; }
    const xs = t.loss.map((_, i) => i);
    plotLines($("train-canvas"), [
      { label: "loss", ys: t.loss, color: "#bbb" },
      { label: "20-epoch average", ys: t.smoothed_loss, color: "#c52" },
    ], xs);
    info.textContent =
      `SI-SDR ${t.baseline_si_sdr.toFixed(2)} dB -> ${t.final_si_sdr.toFixed(2)} dB ` +
      `(improvement ${t.si_sdr_improvement.toFixed(2)} dB), permutation (${t.permutation.join(" ")})`;
  }, 10);
}

await init();
["plan-n", "plan-beta", "plan-k", "plan-seed"].forEach((id) => $(id).addEventListener("input", drawPlan));
["curves-n", "curves-seed"].forEach((id) => $(id).addEventListener("input", drawCurves));
$("train-n").addEventListener("input", () => showValue($("train-n")));
$("train-run").addEventListener("click", runTraining);
drawPlan();
drawCurves();
runTraining();
