/**
 * Preprocessing: bilinear resize to the backbone's input size and grayscale
 * to 3-channel duplication. Kept in plain typed arrays so the pipeline stays
 * deterministic and backend-independent.
 */

import { DecodedImage } from './images.js'

/** height * width * 3 float32 in [0, 1], resized with bilinear sampling. */
export function preprocess(image: DecodedImage, size: number): Float32Array {
  const rgb = image.channels === 3 ? image : duplicateChannels(image)
  return resizeBilinear(rgb, size, size)
}

function duplicateChannels(image: DecodedImage): DecodedImage {
  const { width, height, data } = image
  const out = new Float32Array(width * height * 3)
  for (let i = 0; i < width * height; i++) {
    out[i * 3] = out[i * 3 + 1] = out[i * 3 + 2] = data[i]
  }
  return { width, height, channels: 3, data: out }
}

function resizeBilinear(image: DecodedImage, outH: number, outW: number): Float32Array {
  const { width, height, data } = image
  const out = new Float32Array(outH * outW * 3)
  // align corners: endpoints map onto endpoints, as resize conventions go
  const scaleY = outH > 1 ? (height - 1) / (outH - 1) : 0
  const scaleX = outW > 1 ? (width - 1) / (outW - 1) : 0
  for (let y = 0; y < outH; y++) {
    const srcY = y * scaleY
    const y0 = Math.floor(srcY)
    const y1 = Math.min(y0 + 1, height - 1)
    const fy = srcY - y0
    for (let x = 0; x < outW; x++) {
      const srcX = x * scaleX
      const x0 = Math.floor(srcX)
      const x1 = Math.min(x0 + 1, width - 1)
      const fx = srcX - x0
      for (let c = 0; c < 3; c++) {
        const tl = data[(y0 * width + x0) * 3 + c]
        const tr = data[(y0 * width + x1) * 3 + c]
        const bl = data[(y1 * width + x0) * 3 + c]
        const br = data[(y1 * width + x1) * 3 + c]
        const top = tl + (tr - tl) * fx
        const bottom = bl + (br - bl) * fx
        out[(y * outW + x) * 3 + c] = top + (bottom - top) * fy
      }
    }
  }
  return out
}
