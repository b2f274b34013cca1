// Browser entry point: wires the DOM to a teleoperation session.

import { DEFAULT_PORT, ProtocolClient, webSocketTransport, DecodedFrame } from "./protocol.js";
import { loadBindings, saveBindings, GamepadState } from "./input.js";
import { ConnectionState, SessionView, TeleopSession } from "./session.js";

const LAYOUTS: Record<string, { instruments: number; axesPerInstrument: number }> = {
  reach: { instruments: 1, axesPerInstrument: 3 },
  deflect_spheres: { instruments: 1, axesPerInstrument: 4 },
  tissue_manipulation: { instruments: 1, axesPerInstrument: 3 },
  rope_cutting: { instruments: 1, axesPerInstrument: 5 },
  thread_in_hole: { instruments: 1, axesPerInstrument: 4 },
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

class DomView implements SessionView {
  private canvas = el<HTMLCanvasElement>("frame");
  private ctx = this.canvas.getContext("2d")!;
  private connection = el<HTMLSpanElement>("connection");
  private status = el<HTMLSpanElement>("status");
  private breakdown = el<HTMLTableSectionElement>("breakdown");
  private recordState = el<HTMLSpanElement>("record-state");
  private warnings = el<HTMLDivElement>("warnings");

  setConnection(state: ConnectionState): void {
    this.connection.textContent = state;
    this.connection.className = `connection ${state}`;
  }

  showFrame(frame: DecodedFrame): void {
    this.canvas.width = frame.width;
    this.canvas.height = frame.height;
    const image = this.ctx.createImageData(frame.width, frame.height);
    for (let i = 0, j = 0; i < frame.rgb.length; i += 3, j += 4) {
      image.data[j] = frame.rgb[i];
      image.data[j + 1] = frame.rgb[i + 1];
      image.data[j + 2] = frame.rgb[i + 2];
      image.data[j + 3] = 255;
    }
    this.ctx.putImageData(image, 0, 0);
  }

  showStatus(status: {
    step: number;
    reward: number;
    terminated: boolean;
    truncated: boolean;
    success: boolean;
  }): void {
    const flags = [
      status.terminated ? "terminated" : "",
      status.truncated ? "truncated" : "",
      status.success ? "success" : "",
    ]
      .filter(Boolean)
      .join(" ");
    this.status.textContent = `step ${status.step}  reward ${status.reward.toFixed(4)}  ${flags}`;
  }

  showBreakdown(terms: [string, number][]): void {
    this.breakdown.replaceChildren(
      ...terms.map(([name, value]) => {
        const row = document.createElement("tr");
        const nameCell = document.createElement("td");
        nameCell.textContent = name;
        const valueCell = document.createElement("td");
        valueCell.textContent = value.toFixed(4);
        row.append(nameCell, valueCell);
        return row;
      }),
    );
  }

  setRecording(recording: boolean, path: string | null): void {
    this.recordState.textContent = recording ? `recording → ${path}` : "not recording";
  }

  warn(message: string): void {
    const line = document.createElement("div");
    line.textContent = message;
    this.warnings.prepend(line);
  }
}

class BrowserInputs {
  private held = new Set<string>();

  constructor() {
    window.addEventListener("keydown", (ev) => {
      if (!ev.repeat) {
        this.held.add(ev.code);
      }
    });
    window.addEventListener("keyup", (ev) => this.held.delete(ev.code));
    window.addEventListener("blur", () => this.held.clear());
  }

  heldKeys(): ReadonlySet<string> {
    return this.held;
  }

  gamepad(): GamepadState | null {
    const pads = navigator.getGamepads ? navigator.getGamepads() : [];
    for (const pad of pads) {
      if (pad !== null && pad.connected) {
        return {
          axes: Array.from(pad.axes),
          buttons: pad.buttons.map((b) => b.value),
        };
      }
    }
    return null;
  }
}

async function connect(): Promise<void> {
  const host = el<HTMLInputElement>("host").value || "127.0.0.1";
  const port = Number(el<HTMLInputElement>("port").value) || DEFAULT_PORT;
  const envId = el<HTMLSelectElement>("env").value;
  const resolution = Number(el<HTMLInputElement>("resolution").value) || 64;
  const seed = Number(el<HTMLInputElement>("seed").value) || 0;

  const view = new DomView();
  const bindings = loadBindings(window.localStorage);
  saveBindings(window.localStorage, bindings); // persist defaults on first run

  const transport = await webSocketTransport(`ws://${host}:${port}/`);
  const client = new ProtocolClient(transport);
  const layout = LAYOUTS[envId] ?? { instruments: 1, axesPerInstrument: 4 };
  const session = new TeleopSession(client, view, new BrowserInputs(), {
    envId,
    config: { observation_type: "RGB", resolution },
    layout,
    bindings,
    seed,
  });

  el<HTMLButtonElement>("reset").onclick = () => {
    void session.resetEpisode(Number(el<HTMLInputElement>("seed").value) || 0);
  };
  el<HTMLButtonElement>("record").onclick = () => {
    const path = el<HTMLInputElement>("record-path").value || "teleop.lgtraj";
    void session.toggleRecording(path);
  };

  await session.start();
}

el<HTMLButtonElement>("connect").onclick = () => {
  void connect().catch((err) => console.error(err));
};
