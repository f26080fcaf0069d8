// Wires the three wasm kernels to the canvases. No framework: the wasm-pack
// output is expected at ./pkg/bandlab_wasm.js (see the repository README for
// the one-line build).

const status = document.getElementById("status");

let wasm;
try {
  wasm = await import("./pkg/bandlab_wasm.js");
  await wasm.default();
  status.textContent = "";
  status.style.display = "none";
} catch (err) {
  status.textContent =
    "WebAssembly module not found — build it first: " +
    "wasm-pack build crates/wasm --target web --out-dir ../../www/pkg " +
    `(${err.message})`;
  throw err;
}

// Yellow-on-blue log-scale colormap for a magnitude in (0, max].
function shade(value, max) {
  if (!(value > 0) || !(max > 0)) return [0, 0, 20];
  const span = 12; // decades of dynamic range
  const u = Math.max(0, 1 + Math.log10(value / max) / span);
  return [255 * u, 220 * u * u, 40 + 60 * (1 - u)];
}

function drawGrid(canvas, table, side) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  const max = table.reduce((a, v) => Math.max(a, v), 0);
  for (let k = 0; k < side * side; k++) {
    const [r, g, b] = shade(table[k], max);
    img.data[4 * k] = r;
    img.data[4 * k + 1] = g;
    img.data[4 * k + 2] = b;
    img.data[4 * k + 3] = 255;
  }
  // Paint at native resolution, then let CSS scale the canvas.
  canvas.width = side;
  canvas.height = side;
  ctx.putImageData(img, 0, 0);
}

function drawProfile(canvas, values) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const positive = values.filter((v) => v > 0);
  if (positive.length === 0) return;
  const top = Math.log10(Math.max(...positive));
  const bottom = Math.min(top - 1, Math.log10(Math.min(...positive)));
  const x = (i) => 10 + (i * (w - 20)) / Math.max(1, values.length - 1);
  const y = (v) =>
    v > 0 ? 10 + (h - 20) * (1 - (Math.log10(v) - bottom) / (top - bottom)) : h - 10;
  ctx.strokeStyle = "#7ee0a3";
  ctx.lineWidth = 2;
  ctx.beginPath();
  values.forEach((v, i) => (i === 0 ? ctx.moveTo(x(i), y(v)) : ctx.lineTo(x(i), y(v))));
  ctx.stroke();
  ctx.fillStyle = "#e2b714";
  values.forEach((v, i) => ctx.fillRect(x(i) - 2, y(v) - 2, 4, 4));
}

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function bind(ids, render) {
  const run = () => {
    for (const id of ids) $(`${id}-val`).textContent = $(id).value;
    try {
      render();
    } catch (err) {
      status.style.display = "";
      status.textContent = `kernel error: ${err.message ?? err}`;
    }
  };
  for (const id of ids) $(id).addEventListener("input", run);
  run();
}

bind(["theta-l", "theta-re", "theta-im"], () => {
  const l = num("theta-l");
  const table = wasm.theta_heatmap(l, num("theta-re"), num("theta-im"));
  drawGrid($("theta-canvas"), table, l);
  const ell = wasm.theta_decay_length(l, num("theta-re"), num("theta-im"));
  $("theta-meta").textContent = `decay length ℓ̂ = ${ell.toFixed(2)}`;
});

bind(["heat-steps"], () => {
  const steps = num("heat-steps");
  const table = wasm.heat_kernel_heatmap(steps, Math.max(steps, 1));
  drawGrid($("heat-canvas"), table, 2 * Math.max(steps, 1) + 1);
  const peak = table.reduce((a, v) => Math.max(a, v), 0);
  $("heat-meta").textContent = `peak mass ${peak.toExponential(2)}`;
});

bind(["loop-l", "loop-e", "loop-t"], () => {
  const values = wasm.loop_profile(num("loop-l"), num("loop-e"), num("loop-t"));
  drawProfile($("loop-canvas"), values);
  const far = values[values.length - 1];
  $("loop-meta").textContent =
    `k̂(0) = ${values[0].toExponential(2)}, k̂(${values.length - 1}) = ${far.toExponential(2)}`;
});
