// Interactive episode loop: at a fixed tick the current mapped action
// is sent as a step, the returned frame is displayed, and the reward
// breakdown is updated. At most one step is in flight at a time; if a
// tick fires while the previous exchange is still pending it is
// skipped, never queued.

import {
  DecodedFrame,
  Disconnected,
  ProtocolClient,
  StepPayload,
  decodeFrame,
} from "./protocol.js";
import {
  ActionLayout,
  GamepadState,
  InputBinding,
  mapInputs,
} from "./input.js";

export type ConnectionState = "connecting" | "connected" | "disconnected";

// Everything shown to the human comes straight out of server payloads;
// the view never computes simulation state of its own.
export interface SessionView {
  setConnection(state: ConnectionState): void;
  showFrame(frame: DecodedFrame): void;
  showStatus(status: {
    step: number;
    reward: number;
    terminated: boolean;
    truncated: boolean;
    success: boolean;
  }): void;
  showBreakdown(terms: [string, number][]): void;
  setRecording(recording: boolean, path: string | null): void;
  warn(message: string): void;
}

export interface InputSource {
  heldKeys(): ReadonlySet<string>;
  gamepad(): GamepadState | null;
}

export interface SessionOptions {
  envId: string;
  config?: Record<string, unknown>;
  layout: ActionLayout;
  bindings: InputBinding[];
  tickMs?: number;
  seed?: number;
}

export class TeleopSession {
  static readonly DEFAULT_TICK_MS = 100; // 10 Hz, one observation interval

  private actionDim = 0;
  private episodeOver = false;
  private inFlight = false;
  private recording = false;
  private timer: ReturnType<typeof setInterval> | null = null;
  private warnedUnbound = false;
  private framesShown = 0;

  constructor(
    private client: ProtocolClient,
    private view: SessionView,
    private inputs: InputSource,
    private options: SessionOptions,
  ) {}

  get displayedFrames(): number {
    return this.framesShown;
  }

  get isRecording(): boolean {
    return this.recording;
  }

  async start(): Promise<void> {
    this.view.setConnection("connecting");
    try {
      const hello = await this.client.hello();
      if (!hello.env_ids.includes(this.options.envId)) {
        throw new Error(`server does not provide env '${this.options.envId}'`);
      }
      const made = await this.client.make(this.options.envId, this.options.config);
      this.actionDim = made.action_dim;
      await this.beginEpisode(this.options.seed ?? 0);
    } catch (err) {
      this.handleFailure(err);
      throw err;
    }
    this.view.setConnection("connected");
    const tickMs = this.options.tickMs ?? TeleopSession.DEFAULT_TICK_MS;
    this.timer = setInterval(() => void this.tick(), tickMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async resetEpisode(seed: number): Promise<void> {
    while (this.inFlight) {
      await new Promise((r) => setTimeout(r, 5));
    }
    this.inFlight = true;
    try {
      await this.beginEpisode(seed);
    } catch (err) {
      this.handleFailure(err);
    } finally {
      this.inFlight = false;
    }
  }

  async toggleRecording(path: string): Promise<void> {
    try {
      if (this.recording) {
        const stopped = await this.client.recordStop();
        this.recording = false;
        this.view.setRecording(false, stopped.path);
      } else {
        await this.client.recordStart(path, "human");
        this.recording = true;
        this.view.setRecording(true, path);
      }
    } catch (err) {
      this.handleFailure(err);
    }
  }

  // Exposed for tests; the interval calls this.
  async tick(): Promise<void> {
    if (this.inFlight || this.episodeOver) {
      return;
    }
    this.inFlight = true;
    try {
      const mapped = mapInputs(
        this.inputs.heldKeys(),
        this.inputs.gamepad(),
        this.options.bindings,
        this.options.layout,
      );
      if (mapped.action.length !== this.actionDim) {
        throw new Error(
          `binding layout produces ${mapped.action.length} axes, env expects ${this.actionDim}`,
        );
      }
      if (mapped.unboundAxes.length > 0 && !this.warnedUnbound) {
        this.warnedUnbound = true;
        this.view.warn(`no binding for action axes ${mapped.unboundAxes.join(", ")}`);
      }
      const step = await this.client.step(mapped.action);
      this.applyStep(step);
      await this.showCurrentFrame();
    } catch (err) {
      this.handleFailure(err);
    } finally {
      this.inFlight = false;
    }
  }

  private async beginEpisode(seed: number): Promise<void> {
    await this.client.reset(seed);
    this.episodeOver = false;
    this.view.showStatus({
      step: 0,
      reward: 0,
      terminated: false,
      truncated: false,
      success: false,
    });
    this.view.showBreakdown([]);
    await this.showCurrentFrame();
  }

  private async showCurrentFrame(): Promise<void> {
    const frame = decodeFrame(await this.client.render());
    this.framesShown += 1;
    this.view.showFrame(frame);
  }

  private applyStep(step: StepPayload): void {
    this.episodeOver = step.terminated || step.truncated;
    this.view.showStatus({
      step: step.info.step,
      reward: step.reward,
      terminated: step.terminated,
      truncated: step.truncated,
      success: step.info.success,
    });
    this.view.showBreakdown(step.info.reward_breakdown);
  }

  private handleFailure(err: unknown): void {
    this.stop();
    if (err instanceof Disconnected) {
      this.view.setConnection("disconnected");
    } else {
      this.view.warn(err instanceof Error ? err.message : String(err));
    }
  }
}
