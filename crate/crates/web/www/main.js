import init, { uq_grid, pevi_field, beta_ood_curve } from "./pkg/pbrl_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// White to dark blue.
function shade(t) {
  const c = Math.max(0, Math.min(1, t));
  return `rgb(${Math.round(255 * (1 - 0.85 * c))},${Math.round(255 * (1 - 0.7 * c))},${Math.round(255 - 80 * c)})`;
}

function drawUq() {
  const gridN = 41;
  const n = num("uq-n");
  const v = uq_grid(num("uq-seed"), n, gridN, num("uq-steps"));
  const ctx = $("uq").getContext("2d");
  const size = $("uq").width;
  const cell = size / gridN;
  let max = 0;
  for (let i = 0; i < gridN * gridN; i++) max = Math.max(max, v[3 * i + 2]);
  for (let i = 0; i < gridN * gridN; i++) {
    const row = Math.floor(i / gridN), col = i % gridN;
    ctx.fillStyle = shade(max > 0 ? v[3 * i + 2] / max : 0);
    ctx.fillRect(col * cell, size - (row + 1) * cell, cell + 0.5, cell + 0.5);
  }
  const toPx = (x) => ((x + 4) / 8) * size;
  ctx.fillStyle = "#fff";
  ctx.strokeStyle = "#000";
  for (let i = 0; i < n; i++) {
    const x = v[3 * gridN * gridN + 2 * i], y = v[3 * gridN * gridN + 2 * i + 1];
    ctx.beginPath();
    ctx.arc(toPx(x), size - toPx(y), 3, 0, 2 * Math.PI);
    ctx.fill();
    ctx.stroke();
  }
}

// Action order: up, down, left, right.
const ARROWS = ["↑", "↓", "←", "→"];

function drawPevi() {
  const side = 5, stride = 5;
  const f = pevi_field(7, num("pevi-m"), num("pevi-p"), num("pevi-c"));
  const ctx = $("pevi").getContext("2d");
  const cell = $("pevi").width / side;
  ctx.clearRect(0, 0, $("pevi").width, $("pevi").height);
  ctx.textAlign = "center";
  for (let s = 0; s < side * side; s++) {
    const [vHat, vStar, penalty, action, step] = f.slice(stride * s, stride * s + stride);
    const x = s % side, y = Math.floor(s / side);
    const px = x * cell, py = (side - 1 - y) * cell;
    ctx.fillStyle = shade(vStar > 0 ? vHat / vStar : 0);
    ctx.fillRect(px, py, cell - 1, cell - 1);
    ctx.fillStyle = "#000";
    ctx.font = "20px system-ui";
    ctx.fillText(ARROWS[action] ?? "?", px + cell / 2, py + cell / 2);
    ctx.font = "11px system-ui";
    ctx.fillText(`${vHat.toFixed(2)} / ${vStar.toFixed(2)}`, px + cell / 2, py + cell - 20);
    ctx.fillText(`t=${step}  Γ ${penalty.toFixed(2)}`, px + cell / 2, py + cell - 7);
  }
}

function drawBeta() {
  const steps = num("beta-steps");
  const v = beta_ood_curve(steps, 200);
  const canvas = $("beta");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 30;
  let max = 0;
  for (let i = 1; i < v.length; i += 2) max = Math.max(max, v[i]);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, 5, w - pad - 5, h - pad - 5);
  ctx.strokeStyle = "#1a4";
  ctx.lineWidth = 2;
  ctx.beginPath();
  for (let i = 0; i < v.length; i += 2) {
    const x = pad + (v[i] / steps) * (w - pad - 5);
    const y = h - pad - (v[i + 1] / max) * (h - pad - 5);
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  }
  ctx.stroke();
  ctx.fillStyle = "#000";
  ctx.font = "11px system-ui";
  ctx.fillText(max.toFixed(2), 2, 14);
  ctx.fillText("0", 18, h - pad);
  ctx.fillText(String(steps), w - 45, h - pad + 14);
}

function guarded(fn) {
  return () => {
    try {
      fn();
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
}

await init();
$("uq-run").onclick = guarded(drawUq);
$("pevi-run").onclick = guarded(drawPevi);
$("beta-run").onclick = guarded(drawBeta);
guarded(() => { drawBeta(); drawPevi(); drawUq(); })();
