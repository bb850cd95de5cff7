/** Mixing tray: accumulates generated clips and builds the /mix request.
 * The tray is a pure passthrough; clip bytes go to the server verbatim. */

export interface TrayClip {
  id: number;
  label: string;
  wavB64: string;
  seed: number;
}

export interface TrayState {
  clips: TrayClip[];
  nextId: number;
}

export function newTray(): TrayState {
  return { clips: [], nextId: 1 };
}

export function addClip(
  tray: TrayState,
  label: string,
  wavB64: string,
  seed: number,
): TrayState {
  const clip: TrayClip = { id: tray.nextId, label, wavB64, seed };
  return { clips: [...tray.clips, clip], nextId: tray.nextId + 1 };
}

export function removeClip(tray: TrayState, id: number): TrayState {
  return { ...tray, clips: tray.clips.filter((c) => c.id !== id) };
}

export function canMix(tray: TrayState): boolean {
  return tray.clips.length >= 1;
}

/** The exact clip list for POST /mix, in tray order. */
export function mixPayload(tray: TrayState): string[] {
  return tray.clips.map((c) => c.wavB64);
}
