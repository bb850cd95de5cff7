/** Typed client for the generation service. */

export interface ServiceConfig {
  checkpoint: string;
  classes: string[];
  curve_length: number;
  curve_rate: number;
  clip_seconds: number;
  mask_frames: number;
  grid_h: number;
  grid_w: number;
  mel_bins: number;
  mel_frames: number;
  timesteps: number;
  default_steps: number;
  default_sampler: string;
  s_text: number;
  s_video: number;
}

export interface CurveJson {
  rate: number;
  values: number[];
}

export interface MaskFrameJson {
  t: number;
  cells: number[][];
}

export interface MaskJson {
  frames: MaskFrameJson[];
}

export interface GenerateRequest {
  curve?: CurveJson | null;
  mask?: MaskJson | null;
  tag?: string | null;
  s_text?: number;
  s_video?: number;
  steps?: number;
  sampler?: string;
  seed?: number | null;
}

export interface GenerateResponse {
  wav: string; // base64 PCM WAV
  mel: { frame_rate: number; values: number[][] };
  achieved_envelope: CurveJson;
  envelope_r: number | null;
  predicted_class: number;
  predicted_class_name: string;
  seed: number;
}

export interface MixResponse {
  wav: string;
}

export interface FieldError {
  field: string | null;
  message: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: FieldError,
  ) {
    super(detail.message);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let detail: FieldError = { field: null, message: `HTTP ${res.status}` };
  try {
    const body = await res.json();
    if (body && typeof body.detail === "object" && body.detail !== null) {
      detail = body.detail as FieldError;
    } else if (body && typeof body.error === "string") {
      detail = { field: null, message: `${body.error} (${body.id ?? "?"})` };
    }
  } catch {
    /* non-JSON error body; keep the generic message */
  }
  return new ApiError(res.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path);
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  health(): Promise<{ status: string; checkpoint: string }> {
    return this.get("/health");
  }

  config(): Promise<ServiceConfig> {
    return this.get("/config");
  }

  generate(req: GenerateRequest): Promise<GenerateResponse> {
    return this.post("/generate", req);
  }

  mix(clips: string[]): Promise<MixResponse> {
    return this.post("/mix", { clips });
  }
}

/** Decode a base64 WAV payload into a blob URL for an <audio> element. */
export function wavToObjectUrl(b64: string): string {
  const bytes = Uint8Array.from(atob(b64), (c) => c.charCodeAt(0));
  return URL.createObjectURL(new Blob([bytes], { type: "audio/wav" }));
}
