/**
 * Embedding backbones behind a named plug-in interface.
 *
 * - `tiny-cnn` (default): a small convolutional network whose weights are
 *   generated from a fixed-seed PRNG, so it works offline and produces the
 *   same embedding bytes on every run. Untrained weights still give usable
 *   similarity structure for smoke tests and pipeline validation.
 * - `file:<dir>`: a serialized tfjs layers model; the embedding is the
 *   output of its penultimate layer, flattened.
 */

import * as tf from '@tensorflow/tfjs'
import { loadLayersModelFromDir } from './fsio.js'

export interface Backbone {
  name: string
  inputSize: number
  dim: number
  /** [n, inputSize, inputSize, 3] in [0,1] -> [n, dim] */
  embed(batch: tf.Tensor4D): tf.Tensor2D
}

export const DEFAULT_BACKBONE = 'tiny-cnn'
const TINY_INPUT = 64
const TINY_DIM = 64
const TINY_SEED = 0x5eed

/** Deterministic PRNG (mulberry32); good enough for weight generation. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0
  return () => {
    state = (state + 0x6d2b79f5) >>> 0
    let t = state
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

function seededWeights(model: tf.LayersModel, seed: number): void {
  const rand = mulberry32(seed)
  const tensors = model.getWeights().map(w => {
    const size = w.size
    const shape = w.shape as number[]
    const fanIn = shape.length > 1 ? size / shape[shape.length - 1] : size
    const scale = Math.sqrt(2 / fanIn)
    const values = new Float32Array(size)
    for (let i = 0; i < size; i++) values[i] = (rand() * 2 - 1) * scale
    return tf.tensor(values, w.shape)
  })
  model.setWeights(tensors)
  tensors.forEach(t => t.dispose())
}

export function buildTinyCnn(): tf.LayersModel {
  const model = tf.sequential({
    layers: [
      tf.layers.conv2d({
        inputShape: [TINY_INPUT, TINY_INPUT, 3],
        filters: 8, kernelSize: 3, strides: 2, padding: 'same', activation: 'relu',
      }),
      tf.layers.conv2d({
        filters: 16, kernelSize: 3, strides: 2, padding: 'same', activation: 'relu',
      }),
      tf.layers.conv2d({
        filters: 32, kernelSize: 3, strides: 2, padding: 'same', activation: 'relu',
      }),
      tf.layers.globalAveragePooling2d({}),
      tf.layers.dense({ units: TINY_DIM, activation: 'relu' }),
    ],
  })
  seededWeights(model, TINY_SEED)
  return model
}

class ModelBackbone implements Backbone {
  constructor(
    public name: string,
    private model: tf.LayersModel,
    public inputSize: number,
    public dim: number,
    private wantsGray: boolean,
  ) {}

  embed(batch: tf.Tensor4D): tf.Tensor2D {
    return tf.tidy(() => {
      const input = this.wantsGray ? batch.mean(3, true) : batch
      const out = this.model.predict(input) as tf.Tensor
      return out.reshape([batch.shape[0], this.dim]) as tf.Tensor2D
    })
  }
}

export async function loadBackbone(name: string = DEFAULT_BACKBONE): Promise<Backbone> {
  if (name === 'tiny-cnn') {
    return new ModelBackbone(name, buildTinyCnn(), TINY_INPUT, TINY_DIM, false)
  }
  if (name.startsWith('file:')) {
    const dir = name.slice('file:'.length)
    const full = await loadLayersModelFromDir(dir)
    const layers = full.layers
    if (layers.length < 2) {
      throw new Error(`${dir}: model needs at least two layers for a penultimate embedding`)
    }
    const penultimate = layers[layers.length - 2].output as tf.SymbolicTensor
    const model = tf.model({ inputs: full.inputs, outputs: penultimate })
    const inShape = full.inputs[0].shape // [null, h, w, c]
    if (inShape.length !== 4 || inShape[1] !== inShape[2]) {
      throw new Error(`${dir}: expected a square [h, w, c] image input, got ${inShape}`)
    }
    const channels = inShape[3] as number
    if (channels !== 1 && channels !== 3) {
      throw new Error(`${dir}: expected 1 or 3 input channels, got ${channels}`)
    }
    const dims = penultimate.shape.slice(1).map(v => {
      if (v == null) throw new Error(`${dir}: dynamic embedding shape unsupported`)
      return v
    })
    const dim = dims.reduce((a, b) => a * b, 1)
    return new ModelBackbone(name, model, inShape[1] as number, dim, channels === 1)
  }
  throw new Error(`unknown backbone '${name}' (use tiny-cnn or file:<dir>)`)
}
