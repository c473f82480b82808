#!/usr/bin/env node
/**
 * deepselect-extract: image folder in, engine-ready matrices out.
 *
 *   deepselect-extract --images photos/ --out-features feats.dsm1 \
 *       --model builtin:toy10 --out-probs probs.dsm1 \
 *       --backbone tiny-cnn --batch 16 --manifest manifest.json
 *
 * Exits 0 on success, 2 on usage/input problems, 1 on internal errors.
 */

import { resolve } from 'path'
import { extractFeatures, extractProbabilities } from './extract.js'
import { writeDsm1 } from './dsm1.js'
import { emitManifest } from './manifest.js'
import { DEFAULT_BACKBONE } from './backbone.js'

interface Args {
  images?: string
  model?: string
  outFeatures?: string
  outProbs?: string
  backbone: string
  batch: number
  manifest?: string
}

class UsageError extends Error {}

function parseArgs(argv: string[]): Args {
  const args: Args = { backbone: DEFAULT_BACKBONE, batch: 16 }
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i]
    const next = () => {
      if (i + 1 >= argv.length) throw new UsageError(`${flag} needs a value`)
      return argv[++i]
    }
    switch (flag) {
      case '--images': args.images = next(); break
      case '--model': args.model = next(); break
      case '--out-features': args.outFeatures = next(); break
      case '--out-probs': args.outProbs = next(); break
      case '--backbone': args.backbone = next(); break
      case '--batch': {
        args.batch = Number(next())
        if (!Number.isInteger(args.batch) || args.batch < 1) {
          throw new UsageError('--batch must be a positive integer')
        }
        break
      }
      case '--manifest': args.manifest = next(); break
      case '--help':
      case '-h':
        console.log(
          'usage: deepselect-extract --images DIR [--out-features F.dsm1] ' +
          '[--model SPEC --out-probs P.dsm1] [--backbone NAME] [--batch N] ' +
          '[--manifest M.json]',
        )
        process.exit(0)
        break
      default:
        throw new UsageError(`unknown flag ${flag}`)
    }
  }
  if (!args.images) throw new UsageError('--images is required')
  if (!args.outFeatures && !args.outProbs) {
    throw new UsageError('nothing to do: pass --out-features and/or --out-probs')
  }
  if (args.outProbs && !args.model) {
    throw new UsageError('--out-probs needs --model (builtin:toy<m> or a model directory)')
  }
  return args
}

export async function run(argv: string[]): Promise<number> {
  let args: Args
  try {
    args = parseArgs(argv)
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`error: ${err.message}`)
      return 2
    }
    throw err
  }
  try {
    let names: string[] | undefined
    let d: number | undefined
    let m: number | undefined
    let backboneUsed: string | undefined
    let inputSize: number | undefined
    let softmaxApplied: boolean | undefined

    if (args.outFeatures) {
      const features = await extractFeatures({
        imagesDir: args.images!,
        backbone: args.backbone,
        batchSize: args.batch,
      })
      writeDsm1(resolve(args.outFeatures), features.matrix)
      names = features.names
      d = features.matrix.cols
      backboneUsed = features.backbone
      inputSize = features.inputSize
      console.log(`wrote ${args.outFeatures}: ${features.matrix.rows} x ${d}`)
    }
    if (args.outProbs) {
      const probs = await extractProbabilities({
        imagesDir: args.images!,
        model: args.model,
        batchSize: args.batch,
      })
      if (names && probs.names.join('\n') !== names.join('\n')) {
        throw new Error('feature and probability row orders diverged')
      }
      writeDsm1(resolve(args.outProbs), probs.matrix)
      names = names ?? probs.names
      m = probs.matrix.cols
      softmaxApplied = probs.softmaxApplied
      console.log(
        `wrote ${args.outProbs}: ${probs.matrix.rows} x ${m}` +
        (probs.softmaxApplied ? ' (softmax applied to logits)' : ''),
      )
    }
    if (args.manifest) {
      emitManifest(resolve(args.manifest), {
        features: args.outFeatures ? resolve(args.outFeatures) : undefined,
        probabilities: args.outProbs ? resolve(args.outProbs) : undefined,
        n: names!.length,
        m,
        d,
        extractor: {
          backbone: backboneUsed,
          model: args.model,
          input_size: inputSize,
          softmax_applied: softmaxApplied,
          image_order: names!,
        },
      })
      console.log(`wrote ${args.manifest}`)
    }
    return 0
  } catch (err) {
    const message = (err as Error).message ?? String(err)
    if (/unreadable images|no readable images|unknown backbone|needs a model|class count/.test(message)) {
      console.error(`error: ${message}`)
      return 2
    }
    console.error(`internal error: ${message}`)
    return 1
  }
}

const invokedDirectly =
  process.argv[1] && import.meta.url === new URL(`file://${resolve(process.argv[1])}`).href
if (invokedDirectly) {
  run(process.argv.slice(2)).then(code => {
    process.exitCode = code
  })
}
