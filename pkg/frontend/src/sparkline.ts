/** Rolling metrics sparkline (queue history) with a bounded window. */

export class Sparkline {
  private values: number[] = [];

  constructor(private capacity = 240) {}

  push(v: number): void {
    this.values.push(v);
    if (this.values.length > this.capacity) {
      this.values.shift();
    }
  }

  get data(): readonly number[] {
    return this.values;
  }

  draw(ctx: CanvasRenderingContext2D, width: number, height: number): void {
    ctx.clearRect(0, 0, width, height);
    ctx.fillStyle = "#11151c";
    ctx.fillRect(0, 0, width, height);
    if (this.values.length < 2) return;
    const max = Math.max(...this.values, 1e-9);
    ctx.strokeStyle = "rgb(120,180,255)";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    this.values.forEach((v, i) => {
      const x = (i / (this.capacity - 1)) * width;
      const y = height - 2 - (v / max) * (height - 6);
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
}
