// FIFO playback: clips play back to back, never overlapping. Decode
// failures are logged and skipped so the queue always drains.

export interface ClipPlayer {
  /** Resolves when the clip has finished playing; rejects if undecodable. */
  play(data: Uint8Array, mime: string): Promise<void>
  /** Halt whatever is currently playing. */
  stop(): void
  setMuted(muted: boolean): void
}

export interface QueuedClip {
  data: Uint8Array
  mime: string
  batchIndex: number
}

export class PlaybackQueue {
  private queue: QueuedClip[] = []
  private draining = false
  private stopped = false
  playing = false
  started = 0
  skipped = 0

  constructor(
    private player: ClipPlayer,
    private log: (message: string) => void = () => {},
  ) {}

  enqueue(clip: QueuedClip): void {
    this.queue.push(clip)
    void this.drain()
  }

  get pending(): number {
    return this.queue.length
  }

  private async drain(): Promise<void> {
    if (this.draining) return
    this.draining = true
    try {
      while (this.queue.length > 0 && !this.stopped) {
        const clip = this.queue.shift()!
        this.playing = true
        this.started++
        try {
          await this.player.play(clip.data, clip.mime)
        } catch (err) {
          this.started--
          this.skipped++
          this.log(`clip for batch ${clip.batchIndex} skipped: ${String(err)}`)
        } finally {
          this.playing = false
        }
      }
    } finally {
      this.draining = false
    }
  }

  stop(): void {
    this.stopped = true
    this.queue.length = 0
    this.player.stop()
    this.playing = false
  }

  reset(): void {
    this.stopped = false
  }

  setMuted(muted: boolean): void {
    this.player.setMuted(muted)
  }
}

/** Browser implementation backed by HTMLAudioElement object URLs. */
export class HtmlAudioPlayer implements ClipPlayer {
  private current: HTMLAudioElement | null = null
  private muted = false

  play(data: Uint8Array, mime: string): Promise<void> {
    return new Promise((resolve, reject) => {
      const url = URL.createObjectURL(new Blob([data.buffer as ArrayBuffer], { type: mime }))
      const element = new Audio(url)
      element.muted = this.muted
      this.current = element
      const finish = () => {
        URL.revokeObjectURL(url)
        if (this.current === element) this.current = null
        resolve()
      }
      element.onended = finish
      element.onerror = () => {
        URL.revokeObjectURL(url)
        reject(new Error('audio element failed to decode clip'))
      }
      element.play().catch((err) => {
        URL.revokeObjectURL(url)
        reject(err)
      })
    })
  }

  stop(): void {
    if (this.current) {
      this.current.pause()
      this.current.src = ''
      this.current = null
    }
  }

  setMuted(muted: boolean): void {
    this.muted = muted
    if (this.current) this.current.muted = muted
  }
}
