/**
 * Minimal Markdown renderer for review content. Open-QA items embed
 * commands and code, so fenced blocks are first-class; all input is
 * HTML-escaped before any markup is applied.
 */

const HTML_ESCAPES: Record<string, string> = {
  '&': '&amp;',
  '<': '&lt;',
  '>': '&gt;',
  '"': '&quot;',
  "'": '&#39;',
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => HTML_ESCAPES[ch] ?? ch);
}

function renderInline(text: string): string {
  let out = escapeHtml(text);
  out = out.replace(/`([^`]+)`/g, (_m, code: string) => `<code>${code}</code>`);
  out = out.replace(/\*\*([^*]+)\*\*/g, (_m, body: string) => `<strong>${body}</strong>`);
  out = out.replace(/(^|[^*])\*([^*]+)\*(?!\*)/g, (_m, pre: string, body: string) => `${pre}<em>${body}</em>`);
  return out;
}

export function renderMarkdown(text: string): string {
  const lines = text.split('\n');
  const html: string[] = [];
  let paragraph: string[] = [];
  let listItems: string[] = [];
  let fence: string[] | null = null;
  let fenceLang = '';

  const flushParagraph = () => {
    if (paragraph.length) {
      html.push(`<p>${paragraph.map(renderInline).join('<br>')}</p>`);
      paragraph = [];
    }
  };
  const flushList = () => {
    if (listItems.length) {
      html.push(`<ul>${listItems.map((item) => `<li>${renderInline(item)}</li>`).join('')}</ul>`);
      listItems = [];
    }
  };

  for (const line of lines) {
    const fenceMatch = line.match(/^```(\S*)\s*$/);
    if (fence !== null) {
      if (fenceMatch) {
        const cls = fenceLang ? ` class="language-${escapeHtml(fenceLang)}"` : '';
        html.push(`<pre><code${cls}>${escapeHtml(fence.join('\n'))}</code></pre>`);
        fence = null;
      } else {
        fence.push(line);
      }
      continue;
    }
    if (fenceMatch) {
      flushParagraph();
      flushList();
      fence = [];
      fenceLang = fenceMatch[1] ?? '';
      continue;
    }
    const heading = line.match(/^(#{1,6})\s+(.*)$/);
    if (heading) {
      flushParagraph();
      flushList();
      const level = heading[1]!.length;
      html.push(`<h${level}>${renderInline(heading[2] ?? '')}</h${level}>`);
      continue;
    }
    const listItem = line.match(/^\s*[-*]\s+(.*)$/);
    if (listItem) {
      flushParagraph();
      listItems.push(listItem[1] ?? '');
      continue;
    }
    if (!line.trim()) {
      flushParagraph();
      flushList();
      continue;
    }
    flushList();
    paragraph.push(line);
  }
  if (fence !== null) {
    // unterminated fence: render what we have rather than dropping it
    html.push(`<pre><code>${escapeHtml(fence.join('\n'))}</code></pre>`);
  }
  flushParagraph();
  flushList();
  return html.join('\n');
}
