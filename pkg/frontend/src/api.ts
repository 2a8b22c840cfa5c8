/** Typed wrappers around the annotation service endpoints. */

export interface ImageInfo {
  image_id: string;
  status: "unannotated" | "committed";
  width: number;
  height: number;
  version: number;
}

export interface SubmitResult {
  ok: boolean;
  message: string;
  offendingPixels?: number;
}

export async function listImages(): Promise<ImageInfo[]> {
  const resp = await fetch("/api/images");
  if (!resp.ok) throw new Error(`service error ${resp.status}`);
  return resp.json();
}

async function fetchBitmap(url: string): Promise<ImageBitmap> {
  const resp = await fetch(url);
  if (!resp.ok) throw new Error(`service error ${resp.status} for ${url}`);
  return createImageBitmap(await resp.blob());
}

export function fetchImage(imageId: string): Promise<ImageBitmap> {
  return fetchBitmap(`/api/images/${imageId}`);
}

/** Decode a served mask PNG to one byte per pixel via an offscreen canvas. */
async function fetchMaskPixels(url: string, width: number, height: number): Promise<Uint8Array> {
  const bitmap = await fetchBitmap(url);
  const canvas = new OffscreenCanvas(width, height);
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");
  ctx.drawImage(bitmap, 0, 0);
  const rgba = ctx.getImageData(0, 0, width, height).data;
  const gray = new Uint8Array(width * height);
  for (let i = 0; i < gray.length; i++) {
    gray[i] = rgba[i * 4];
  }
  return gray;
}

/** Specular mask as 0/1 per pixel (1 = free to paint). */
export async function fetchSrMask(
  imageId: string,
  width: number,
  height: number,
): Promise<Uint8Array> {
  const gray = await fetchMaskPixels(`/api/images/${imageId}/srmask`, width, height);
  return gray.map((v) => (v === 255 ? 1 : 0));
}

/** Committed hidden mask as raw 0/255 pixels, or null if none exists yet. */
export async function fetchCommittedMask(
  imageId: string,
  width: number,
  height: number,
): Promise<Uint8Array | null> {
  const resp = await fetch(`/api/images/${imageId}/mask`);
  if (resp.status === 404) return null;
  if (!resp.ok) throw new Error(`service error ${resp.status}`);
  const bitmap = await createImageBitmap(await resp.blob());
  const canvas = new OffscreenCanvas(width, height);
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");
  ctx.drawImage(bitmap, 0, 0);
  const rgba = ctx.getImageData(0, 0, width, height).data;
  const gray = new Uint8Array(width * height);
  for (let i = 0; i < gray.length; i++) {
    gray[i] = rgba[i * 4];
  }
  return gray;
}

export async function submitMask(imageId: string, png: Uint8Array): Promise<SubmitResult> {
  const resp = await fetch(`/api/images/${imageId}/mask`, {
    method: "POST",
    headers: { "content-type": "image/png" },
    // slice() re-backs the view with a plain ArrayBuffer, which BodyInit wants
    body: png.slice(),
  });
  if (resp.ok) {
    const body = await resp.json();
    return { ok: true, message: `committed (version ${body.version})` };
  }
  const detail = (await resp.json()).detail;
  if (typeof detail === "object" && detail !== null && "offending_pixels" in detail) {
    return {
      ok: false,
      message: detail.message,
      offendingPixels: detail.offending_pixels,
    };
  }
  return { ok: false, message: String(detail) };
}
