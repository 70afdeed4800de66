import init, { Demo } from './pkg/deocclude_web.js';

const SIZE = 128;

function paint(id, bytes) {
  const ctx = document.getElementById(id).getContext('2d');
  ctx.putImageData(new ImageData(new Uint8ClampedArray(bytes), SIZE, SIZE), 0, 0);
}

await init();
const demo = new Demo(SIZE, 0n);
const value = id => parseFloat(document.getElementById(id).value);

function drawFace() {
  const sh = new Float64Array([value('sh0'), value('sh1'), 0, value('sh3')]);
  paint('face', demo.render(value('yaw'), value('pitch'), 0, sh));
}
for (const id of ['yaw', 'pitch', 'sh0', 'sh1', 'sh3']) {
  document.getElementById(id).addEventListener('input', drawFace);
}

const layer = document.getElementById('layer');
layer.addEventListener('change', () => paint('blend', demo.scene(layer.value)));
document.getElementById('show-blend').addEventListener('click', () => paint('blend', demo.blend(0)));

const status = document.getElementById('status');
let running = false;
function tick() {
  if (!running) return;
  const v = demo.step(5);
  paint('estimate', demo.estimate());
  status.textContent = `step ${demo.steps()} / ${demo.iterations()}  objective ${v.toFixed(4)}`;
  if (demo.steps() >= demo.iterations()) running = false;
  else requestAnimationFrame(tick);
}
document.getElementById('run').addEventListener('click', () => {
  running = !running;
  if (running) tick();
});
document.getElementById('reset').addEventListener('click', () => {
  running = false;
  demo.reset();
  paint('estimate', demo.estimate());
  status.textContent = '';
});

drawFace();
paint('input', demo.scene('image'));
paint('blend', demo.scene('prior'));
paint('estimate', demo.estimate());
