// Glue for the distortion-bank demo. Expects the wasm-pack output in
// ../pkg (see the README for the build command).
import init, {
  list_kinds,
  synth_demo_png,
  distort_png,
  severity_curve,
  sample_ola_rects,
} from "../pkg/iqa_wasm_demo.js";

let sourcePng = null; // Uint8Array of the current source image
let sourceDims = [256, 256];

function drawPng(canvas, bytes) {
  return new Promise((resolve) => {
    const blob = new Blob([bytes], { type: "image/png" });
    const url = URL.createObjectURL(blob);
    const img = new Image();
    img.onload = () => {
      canvas.width = img.width;
      canvas.height = img.height;
      canvas.getContext("2d").drawImage(img, 0, 0);
      URL.revokeObjectURL(url);
      resolve([img.width, img.height]);
    };
    img.src = url;
  });
}

async function setSource(bytes) {
  sourcePng = bytes;
  sourceDims = await drawPng(document.getElementById("orig"), bytes);
  await refreshDistortion();
  sampleCrops();
}

async function refreshDistortion() {
  if (!sourcePng) return;
  const kind = document.getElementById("kind").value;
  const level = parseInt(document.getElementById("level").value, 10);
  const seed = BigInt(document.getElementById("distSeed").value || 0);
  document.getElementById("levelLabel").textContent = String(level);
  try {
    const out = distort_png(sourcePng, kind, level, seed);
    await drawPng(document.getElementById("dist"), out);
    const curve = JSON.parse(severity_curve(sourcePng, kind, seed));
    drawCurve(curve, level);
    document.getElementById("mseLabel").textContent =
      "level " + level + " MSE: " + curve[level - 1].toExponential(3);
  } catch (e) {
    document.getElementById("mseLabel").textContent = String(e);
  }
}

function drawCurve(values, activeLevel) {
  const canvas = document.getElementById("curve");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const max = Math.max(...values, 1e-12);
  const barW = canvas.width / 5 - 10;
  values.forEach((v, i) => {
    const h = Math.max(2, (v / max) * (canvas.height - 24));
    const x = i * (barW + 10) + 8;
    ctx.fillStyle = i + 1 === activeLevel ? "#c0392b" : "#2c6fa8";
    ctx.fillRect(x, canvas.height - 16 - h, barW, h);
    ctx.fillStyle = "#222";
    ctx.font = "11px sans-serif";
    ctx.fillText(String(i + 1), x + barW / 2 - 3, canvas.height - 4);
  });
}

function sampleCrops() {
  if (!sourcePng) return;
  const canvas = document.getElementById("ola");
  const info = document.getElementById("olaInfo");
  const patch = parseInt(document.getElementById("patch").value, 10);
  const lo = parseFloat(document.getElementById("olaMin").value);
  const hi = parseFloat(document.getElementById("olaMax").value);
  const count = parseInt(document.getElementById("pairCount").value, 10);
  const seed = BigInt(document.getElementById("olaSeed").value || 0);
  drawPng(canvas, sourcePng).then(() => {
    try {
      const pairs = JSON.parse(
        sample_ola_rects(sourceDims[0], sourceDims[1], patch, lo, hi, count, seed)
      );
      const ctx = canvas.getContext("2d");
      const colors = ["#e74c3c", "#27ae60", "#8e44ad", "#f39c12", "#16a085"];
      let text = "";
      pairs.forEach((p, i) => {
        ctx.lineWidth = 2;
        ctx.strokeStyle = colors[i % colors.length];
        ctx.strokeRect(p.a[0], p.a[1], p.a[2], p.a[3]);
        ctx.setLineDash([6, 4]);
        ctx.strokeRect(p.b[0], p.b[1], p.b[2], p.b[3]);
        ctx.setLineDash([]);
        text += `pair ${i}: overlap ${p.overlap}\n`;
      });
      info.textContent = text;
    } catch (e) {
      info.textContent = String(e);
    }
  });
}

async function main() {
  await init();
  const select = document.getElementById("kind");
  for (const kind of JSON.parse(list_kinds())) {
    const opt = document.createElement("option");
    opt.value = kind;
    opt.textContent = kind;
    select.appendChild(opt);
  }
  select.value = "gaussian_blur";

  select.addEventListener("change", refreshDistortion);
  document.getElementById("level").addEventListener("input", refreshDistortion);
  document.getElementById("distSeed").addEventListener("change", refreshDistortion);
  document.getElementById("sample").addEventListener("click", sampleCrops);
  document.getElementById("regen").addEventListener("click", async () => {
    const seed = BigInt(document.getElementById("synthSeed").value || 0);
    await setSource(synth_demo_png(256, 256, seed));
  });
  document.getElementById("upload").addEventListener("change", async (ev) => {
    const file = ev.target.files[0];
    if (file) setSource(new Uint8Array(await file.arrayBuffer()));
  });

  await setSource(synth_demo_png(256, 256, 7n));
}

main();
